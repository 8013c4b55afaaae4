"""Spectral projections of H0, cutoff Hamiltonians and tail bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .config import get_tolerances
from .errors import ProjectionMismatch, SpectrumBelowOne, WrongModelFamily
from .linop import OperatorMatrix, SpectralDecomposition, commutator, max_abs, operator_norm
from .models import ModelInstance, fock_ladder

__all__ = [
    "CutoffFamily",
    "spectral_projection",
    "default_L_grid",
    "projector_defects",
    "cutoff_hamiltonian",
    "tail_norm",
    "tail_norm_oracle",
    "band_projector",
    "label_cutoff",
    "level_projector",
    "ladder_commutation_check",
    "level_commutation_defect",
]


def spectral_projection(S: SpectralDecomposition, L: float) -> OperatorMatrix:
    """Projection onto eigenvectors with eigenvalue <= L (ties within ``tol.tie`` included)."""
    tie = get_tolerances().tie
    L = float(L)

    def build() -> OperatorMatrix:
        mask = S.eigenvalues <= L + tie
        U = S.eigenvectors[:, mask]
        return U @ U.conj().T

    return S.cached(("Q", L, tie), build)


def projector_defects(Q: OperatorMatrix) -> dict[str, float]:
    return {"idempotent": max_abs(Q @ Q - Q), "symmetric": max_abs(Q - Q.conj().T)}


def default_L_grid(
    S: SpectralDecomposition,
    count: int = 12,
    placement: str = "window",
    window: tuple[float, float] = (0.125, 0.5),
) -> tuple[float, ...]:
    """Cutoffs at midpoints between consecutive distinct eigenvalues.

    Every cutoff lies at or below ``lambda_{ceil(d/2)}`` so that the
    truncation edge stays far from the projected block.  ``placement`` is

    ``"window"``
        midpoints from ``lambda_{ceil(d*window[0])}`` up (the default),
    ``"lower-half"``
        all midpoints >= 1 in the lower half of the spectrum,
    ``"log"``
        the same range, picked near a geometric progression so that small
        cutoffs (where fast-decaying series are still above round-off) are
        sampled densely.
    """
    tie = get_tolerances().tie
    lam = np.sort(S.eigenvalues)
    d = lam.size
    upper = lam[math.ceil(d * window[1]) - 1]
    if placement == "window":
        lower = lam[max(math.ceil(d * window[0]) - 1, 0)]
    elif placement in ("lower-half", "log"):
        lower = 1.0
    else:
        raise ValueError(f"unknown placement {placement!r}")
    levels = [lam[0]]
    for x in lam[1:]:
        if x - levels[-1] > tie:
            levels.append(x)
    mids = [(x + y) / 2 for x, y in zip(levels[:-1], levels[1:])]
    mids = [m for m in mids if lower <= m <= upper and m >= 1.0]
    if len(mids) <= count:
        return tuple(float(m) for m in mids)
    if placement == "log":
        targets = np.geomspace(mids[0], mids[-1], count)
        pick = np.unique([int(np.argmin(np.abs(np.asarray(mids) - t))) for t in targets])
    else:
        pick = np.unique(np.round(np.linspace(0, len(mids) - 1, count)).astype(int))
    return tuple(float(mids[i]) for i in pick)


@dataclass(frozen=True, eq=False)
class CutoffFamily:
    source: SpectralDecomposition
    L_grid: tuple[float, ...]
    projectors: Mapping[float, OperatorMatrix] = field(repr=False)

    @classmethod
    def build(cls, S: SpectralDecomposition, L_grid: Iterable[float]) -> "CutoffFamily":
        grid = tuple(sorted(float(L) for L in L_grid))
        return cls(S, grid, {L: spectral_projection(S, L) for L in grid})

    def __getitem__(self, L: float) -> OperatorMatrix:
        return self.projectors[float(L)]

    def invariant_defects(self) -> dict[str, float]:
        """Worst idempotency, symmetry, nesting and [Q, H0] defects over the grid."""
        H0 = self.source.reconstruct()
        out = {"idempotent": 0.0, "symmetric": 0.0, "nesting": 0.0, "commutes_H0": 0.0}
        qs = [self.projectors[L] for L in self.L_grid]
        for i, Q in enumerate(qs):
            pd = projector_defects(Q)
            out["idempotent"] = max(out["idempotent"], pd["idempotent"])
            out["symmetric"] = max(out["symmetric"], pd["symmetric"])
            out["commutes_H0"] = max(out["commutes_H0"], max_abs(commutator(Q, H0)) / max(1.0, max_abs(H0)))
            for Q2 in qs[i:]:
                out["nesting"] = max(out["nesting"], max_abs(Q @ Q2 - Q))
        return out


def cutoff_hamiltonian(m: ModelInstance, Q: OperatorMatrix) -> OperatorMatrix:
    """``Q (H0 + B) Q``, checked against ``H0 Q + Q B Q``."""
    tol = get_tolerances()
    pd = projector_defects(Q)
    if max(pd.values()) > tol.projector:
        raise ProjectionMismatch(f"not an orthogonal projection: {pd}")
    HL = Q @ m.H @ Q
    alt = m.H0 @ Q + Q @ m.B @ Q
    gap = max_abs(HL - alt)
    if gap > tol.cutoff_identity:
        raise ProjectionMismatch(f"Q does not commute with H0: |QHQ - (H0 Q + QBQ)| = {gap:.3e}")
    return HL


def _check_spectrum(S: SpectralDecomposition) -> None:
    if S.eigenvalues[0] < 1.0 - get_tolerances().tie:
        raise SpectrumBelowOne(f"smallest eigenvalue {S.eigenvalues[0]:.6g} < 1")


def tail_norm(S: SpectralDecomposition, L: float, ell: int) -> float:
    """``||H0^-ell (I - Q_L)||`` evaluated as a matrix norm."""
    _check_spectrum(S)
    if ell < 1:
        raise ValueError("ell must be >= 1")
    cut = float(L) + get_tolerances().tie
    T = S.cached(
        ("tail", float(L), int(ell)),
        lambda: (S.eigenvectors * np.where(S.eigenvalues > cut, S.eigenvalues ** (-float(ell)), 0.0))
        @ S.eigenvectors.conj().T,
    )
    return operator_norm(T)


def tail_norm_oracle(eigenvalues: Sequence[float], L: float, ell: int) -> float:
    """Brute-force maximum of ``lambda^-ell`` over eigenvalues above ``L``."""
    cut = float(L) + get_tolerances().tie
    tail = [x ** (-float(ell)) for x in eigenvalues if x > cut]
    return max(tail, default=0.0)


def band_projector(S: SpectralDecomposition, L: float, n: float) -> OperatorMatrix:
    """``Q_{L+n} - Q_L``."""
    if n < 1:
        raise ValueError("band width n must be >= 1")
    return spectral_projection(S, L + n) - spectral_projection(S, L)


# -- Fock-label conventions ---------------------------------------------------
#
# Level labels l = 0, 1, ... count eigenvalues of a^dagger a.  For a model whose
# H0 is diagonal in the Fock basis with increasing diagonal, label l sits at
# eigenvalue H0[l, l] (= l + 1 for the shifted number operator).


def _levels(m: ModelInstance) -> np.ndarray:
    if not m.metadata.get("fock_diagonal_H0"):
        raise WrongModelFamily(f"model {m.name!r}: H0 is not diagonal in the Fock basis")
    diag = np.real(np.diag(m.H0))
    if np.any(np.diff(diag) <= 0):
        raise WrongModelFamily(f"model {m.name!r}: H0 diagonal is not strictly increasing")
    return diag


def label_cutoff(m: ModelInstance, label: int) -> float:
    """Spectral cutoff realizing ``Q_label`` (all levels 0..label)."""
    diag = _levels(m)
    if label < 0:
        return float(diag[0]) - 1.0
    if label >= m.dim - 1:
        return float(diag[-1])
    return float(diag[label])


def level_projector(m: ModelInstance, label: int) -> OperatorMatrix:
    S = m.spectral()
    return spectral_projection(S, label_cutoff(m, label)) - spectral_projection(S, label_cutoff(m, label - 1))


def ladder_commutation_check(m: ModelInstance, L: int) -> float:
    """max-abs of ``Q_L a - a Q_{L+1}`` with ``L`` a Fock label."""
    S = m.spectral()
    a, _ = fock_ladder(m.dim)
    Q_L = spectral_projection(S, label_cutoff(m, L))
    Q_next = spectral_projection(S, label_cutoff(m, L + 1))
    return max_abs(Q_L @ a - a @ Q_next)


def level_commutation_defect(m: ModelInstance) -> float:
    """Worst ``|Pi_l a - a Pi_{l+1}|`` over interior labels ``l = 0 .. dim-2``."""
    a, _ = fock_ladder(m.dim)
    worst = 0.0
    for label in range(m.dim - 1):
        worst = max(worst, max_abs(level_projector(m, label) @ a - a @ level_projector(m, label + 1)))
    return worst
