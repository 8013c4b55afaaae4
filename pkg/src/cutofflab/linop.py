"""Dense complex operator arithmetic on a d-dimensional truncation.

Operators are plain ``numpy`` arrays of shape ``(d, d)`` and dtype
``complex128``; :func:`as_operator` is the single entry point that validates
and converts user input.  Spectral calculus goes through
:class:`SpectralDecomposition`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Hashable

import numpy as np
import scipy.linalg

from .config import get_tolerances
from .errors import (
    BadDimension,
    ConvergenceFailure,
    DimensionMismatch,
    NonDiagonalizable,
    NonFiniteValue,
    NotHermitian,
)

OperatorMatrix = np.ndarray

__all__ = [
    "OperatorMatrix",
    "SpectralDecomposition",
    "HermiticityReport",
    "as_operator",
    "identity",
    "adjoint",
    "commutator",
    "anticommutator",
    "hermiticity",
    "is_hermitian",
    "hermitian_eig",
    "matrix_function",
    "general_matrix_function",
    "propagator",
    "spectral_propagator",
    "operator_norm",
    "power",
    "max_abs",
    "to_json",
    "from_json",
]


def as_operator(X: Any) -> OperatorMatrix:
    """Return ``X`` as a square complex128 array, raising on bad shapes."""
    arr = np.asarray(X, dtype=np.complex128)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise BadDimension(f"expected a non-empty square matrix, got shape {arr.shape}")
    return arr


def identity(dim: int) -> OperatorMatrix:
    return np.eye(dim, dtype=np.complex128)


def _same_dim(X: OperatorMatrix, Y: OperatorMatrix) -> None:
    if X.shape != Y.shape:
        raise DimensionMismatch(f"dimensions differ: {X.shape} vs {Y.shape}")


def max_abs(X: Any) -> float:
    arr = np.asarray(X)
    return float(np.max(np.abs(arr))) if arr.size else 0.0


def adjoint(X: Any) -> OperatorMatrix:
    return as_operator(X).conj().T.copy()


def commutator(X: Any, Y: Any) -> OperatorMatrix:
    X, Y = as_operator(X), as_operator(Y)
    _same_dim(X, Y)
    return X @ Y - Y @ X


def anticommutator(X: Any, Y: Any) -> OperatorMatrix:
    X, Y = as_operator(X), as_operator(Y)
    _same_dim(X, Y)
    return X @ Y + Y @ X


@dataclass(frozen=True)
class HermiticityReport:
    is_hermitian: bool
    defect: float


def hermiticity(X: Any) -> HermiticityReport:
    X = as_operator(X)
    defect = max_abs(X - X.conj().T)
    bound = get_tolerances().herm * (1.0 + max_abs(X))
    return HermiticityReport(is_hermitian=defect <= bound, defect=defect)


def is_hermitian(X: Any) -> bool:
    return hermiticity(X).is_hermitian


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Ascending eigenvalues and orthonormal eigenvectors (as columns).

    Instances are immutable; ``_cache`` only memoizes derived matrices such as
    ``f(S)`` or ``S**k`` so repeated seminorm evaluations stay cheap.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return int(self.eigenvalues.shape[0])

    def reconstruct(self) -> OperatorMatrix:
        U = self.eigenvectors
        return (U * self.eigenvalues) @ U.conj().T

    def cached(self, key: Hashable, build: Callable[[], OperatorMatrix]) -> OperatorMatrix:
        try:
            return self._cache[key]
        except KeyError:
            value = build()
            value.setflags(write=False)
            self._cache[key] = value
            return value


def hermitian_eig(X: Any) -> SpectralDecomposition:
    """Eigendecomposition of a Hermitian operator.

    Raises
    ------
    NotHermitian
        If the hermiticity defect exceeds the configured tolerance.
    ConvergenceFailure
        If LAPACK does not converge or the result fails the unitarity or
        reconstruction checks.
    """
    X = as_operator(X)
    report = hermiticity(X)
    if not report.is_hermitian:
        raise NotHermitian(f"hermiticity defect {report.defect:.3e} exceeds tolerance")
    Xh = 0.5 * (X + X.conj().T)
    try:
        w, U = np.linalg.eigh(Xh)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceFailure(str(exc)) from exc
    tol = get_tolerances()
    S = SpectralDecomposition(w, U)
    unit_err = max_abs(U.conj().T @ U - np.eye(X.shape[0]))
    if unit_err > tol.unitary:
        raise ConvergenceFailure(f"eigenvectors not unitary: {unit_err:.3e}")
    scale = max(np.linalg.norm(X), 1.0)
    recon_err = np.linalg.norm(S.reconstruct() - X) / scale
    if recon_err > tol.recon:
        raise ConvergenceFailure(f"reconstruction error {recon_err:.3e}")
    return S


def _apply_scalar(phi: Callable, values: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(phi(values), dtype=np.complex128)
        if out.shape != values.shape:
            raise ValueError
    except (TypeError, ValueError):
        out = np.array([phi(v) for v in values], dtype=np.complex128)
    if not np.all(np.isfinite(out)):
        raise NonFiniteValue("function is not finite on the spectrum")
    return out


def matrix_function(S: SpectralDecomposition, phi: Callable) -> OperatorMatrix:
    """``U diag(phi(lambda)) U^dagger``."""
    U = S.eigenvectors
    return (U * _apply_scalar(phi, S.eigenvalues)) @ U.conj().T


def general_matrix_function(
    X: Any, phi: Callable, cond_max: float | None = None
) -> tuple[OperatorMatrix, float]:
    """``V diag(phi(w)) V^{-1}`` for a diagonalizable, possibly non-normal ``X``.

    Returns the matrix and the eigenvector condition number.  Raises
    :class:`NonDiagonalizable` when that condition number exceeds
    ``cond_max`` (default: the configured ``eig_cond_max``).
    """
    X = as_operator(X)
    if cond_max is None:
        cond_max = get_tolerances().eig_cond_max
    w, V = scipy.linalg.eig(X)
    cond = float(np.linalg.cond(V))
    if not np.isfinite(cond) or cond >= cond_max:
        raise NonDiagonalizable(f"eigenvector condition number {cond:.3e} >= {cond_max:.1e}")
    F = (V * _apply_scalar(phi, w)) @ np.linalg.inv(V)
    return F, cond


def spectral_propagator(S: SpectralDecomposition, t: float) -> OperatorMatrix:
    """``exp(i t H)`` from a precomputed decomposition of Hermitian ``H``."""
    U = S.eigenvectors
    return (U * np.exp(1j * t * S.eigenvalues)) @ U.conj().T


def propagator(H: Any, t: float, *, return_path: bool = False):
    """``exp(i H t)``.

    Hermitian ``H`` goes through the spectral path and the result is unitary
    to ``tol.unitary``.  Anything else is exponentiated by scaling and
    squaring (``scipy.linalg.expm``) and reported as ``"pade"``; that result
    is not unitary in general.
    """
    H = as_operator(H)
    if t == 0:
        U, path = identity(H.shape[0]), "spectral"
    elif is_hermitian(H):
        U, path = spectral_propagator(hermitian_eig(H), t), "spectral"
    else:
        U = scipy.linalg.expm(1j * t * H)
        if not np.all(np.isfinite(U)):
            raise ConvergenceFailure("matrix exponential overflowed")
        path = "pade"
    return (U, path) if return_path else U


def operator_norm(X: Any) -> float:
    """Largest singular value."""
    X = as_operator(X)
    try:
        return float(np.linalg.norm(X, 2))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceFailure(str(exc)) from exc


def power(X: Any, k: int) -> OperatorMatrix:
    if k < 0:
        raise ValueError("power expects a nonnegative integer exponent")
    return np.linalg.matrix_power(as_operator(X), int(k))


def to_json(X: Any) -> dict:
    X = as_operator(X)
    return {
        "dim": int(X.shape[0]),
        "entries": [[float(z.real), float(z.imag)] for z in X.ravel()],
    }


def from_json(obj: dict) -> OperatorMatrix:
    dim = int(obj["dim"])
    entries = obj["entries"]
    if dim < 1 or len(entries) != dim * dim:
        raise BadDimension(f"expected {dim * dim} entries for dim {dim}, got {len(entries)}")
    flat = np.array([complex(re, im) for re, im in entries], dtype=np.complex128)
    return flat.reshape(dim, dim)
