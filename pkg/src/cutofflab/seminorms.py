"""Test functions and the two-sided seminorms ``max(||S^k A f(S)||, ||f(S) A S^k||)``.

Norms are unitarily invariant, so both products are evaluated in the
eigenbasis of ``S``: with ``A~ = U^dagger A U`` the left product is just
``diag(lambda^k) A~ diag(f(lambda))``.  This avoids forming ``f(S)`` and
``S^k`` as dense matrices and makes a whole (f, k) grid cost one basis change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np
import scipy.linalg

from .config import get_tolerances
from .errors import BadParams, DimensionMismatch, NonFiniteValue, SpectrumBelowOne
from .linop import (
    OperatorMatrix,
    SpectralDecomposition,
    as_operator,
    hermitian_eig,
    is_hermitian,
    matrix_function,
    operator_norm,
)
from .models import ModelInstance, shifted_hamiltonian, profile_variation

__all__ = [
    "TestFunction",
    "SeminormValue",
    "DEFAULT_F_SET",
    "DEFAULT_K_MAX",
    "parse_test_function",
    "quasi_uniform_seminorm",
    "seminorm_grid",
    "seminorm_sup",
    "EquivalenceProfile",
    "equivalence_profile",
]

_KINDS = ("exponential", "gaussian", "polyexp")


def _fmt(x: float) -> str:
    return f"{x:g}"


@dataclass(frozen=True)
class TestFunction:
    """``exp(-alpha x)``, ``exp(-alpha x^2)`` or ``x^m exp(-alpha x)``."""

    __test__ = False  # keep pytest from collecting this class

    kind: str
    alpha: float = 1.0
    m: int = 0

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise BadParams(f"unknown test function kind {self.kind!r}; expected one of {_KINDS}")
        if not self.alpha > 0:
            raise BadParams(f"alpha must be > 0, got {self.alpha}")
        if self.m < 0 or int(self.m) != self.m:
            raise BadParams(f"m must be a nonnegative integer, got {self.m}")
        if self.kind != "polyexp" and self.m:
            raise BadParams("m only applies to polyexp")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "exponential":
            return np.exp(-self.alpha * x)
        if self.kind == "gaussian":
            return np.exp(-self.alpha * x * x)
        return x**self.m * np.exp(-self.alpha * x)

    @property
    def params(self) -> str:
        if self.kind == "polyexp":
            return f"m={self.m};alpha={_fmt(self.alpha)}"
        return f"alpha={_fmt(self.alpha)}"

    @property
    def label(self) -> str:
        return f"{self.kind}[{self.params}]"

    def decay_witness(self, eigenvalues: Sequence[float], k: int) -> float:
        """``max x^k f(x)`` over the given spectrum."""
        x = np.asarray(eigenvalues, dtype=float)
        w = float(np.max(x**k * self(x)))
        if not math.isfinite(w):
            raise NonFiniteValue(f"{self.label}: x^{k} f(x) is not finite on the spectrum")
        return w

    def of_matrix(self, X: Any) -> OperatorMatrix:
        """``f(X)``; through the spectrum if ``X`` is Hermitian, else by power series.

        The non-Hermitian branch uses the matrix exponential, so it needs no
        eigenvector basis and works for defective ``X`` as well.
        """
        X = as_operator(X)
        if is_hermitian(X):
            return matrix_function(hermitian_eig(X), self)
        if self.kind == "exponential":
            F = scipy.linalg.expm(-self.alpha * X)
        elif self.kind == "gaussian":
            F = scipy.linalg.expm(-self.alpha * (X @ X))
        else:
            F = np.linalg.matrix_power(X, self.m) @ scipy.linalg.expm(-self.alpha * X)
        if not np.all(np.isfinite(F)):
            raise NonFiniteValue(f"{self.label} overflowed on a non-Hermitian argument")
        return F


DEFAULT_F_SET: tuple[TestFunction, ...] = (
    TestFunction("exponential"),
    TestFunction("gaussian"),
    TestFunction("polyexp", m=2),
)
DEFAULT_K_MAX = 4


def parse_test_function(spec: str | dict | TestFunction) -> TestFunction:
    """Accepts a TestFunction, a mapping of its fields, or ``"kind"`` /
    ``"kind:alpha"`` / ``"polyexp:m:alpha"`` strings."""
    if isinstance(spec, TestFunction):
        return spec
    if isinstance(spec, dict):
        return TestFunction(**spec)
    parts = str(spec).split(":")
    try:
        if parts[0] == "polyexp":
            m = int(parts[1]) if len(parts) > 1 else 0
            alpha = float(parts[2]) if len(parts) > 2 else 1.0
            return TestFunction("polyexp", alpha, m)
        return TestFunction(parts[0], float(parts[1]) if len(parts) > 1 else 1.0)
    except (ValueError, TypeError, IndexError) as exc:
        raise BadParams(f"cannot parse test function {spec!r}") from exc


@dataclass(frozen=True)
class SeminormValue:
    f: TestFunction
    k: int
    reference: str
    left: float
    right: float

    @property
    def value(self) -> float:
        return max(self.left, self.right)

    def csv_row(self, model: str) -> dict:
        return {
            "model": model,
            "reference": self.reference,
            "f_kind": self.f.kind,
            "f_params": self.f.params,
            "k": self.k,
            "left": self.left,
            "right": self.right,
            "value": self.value,
        }


def _check(A: OperatorMatrix, S: SpectralDecomposition) -> None:
    if A.shape[0] != S.dim:
        raise DimensionMismatch(f"operator dim {A.shape[0]} vs spectrum dim {S.dim}")
    if S.eigenvalues[0] < 1.0 - get_tolerances().tie:
        raise SpectrumBelowOne(f"reference spectrum starts at {S.eigenvalues[0]:.6g} < 1")


def _in_basis(A: OperatorMatrix, S: SpectralDecomposition) -> OperatorMatrix:
    U = S.eigenvectors
    return U.conj().T @ A @ U


def _pair(At: OperatorMatrix, lam: np.ndarray, fv: np.ndarray, k: int, symmetric_only: bool) -> tuple[float, float]:
    pk = lam**k
    right = operator_norm(fv[:, None] * At * pk[None, :])
    if symmetric_only:
        return right, right
    left = operator_norm(pk[:, None] * At * fv[None, :])
    return left, right


def quasi_uniform_seminorm(
    A: Any,
    S: SpectralDecomposition,
    f: TestFunction,
    k: int,
    *,
    reference: str = "H0",
    symmetric_only: bool = False,
) -> SeminormValue:
    """Seminorm of ``A`` for test function ``f`` and power ``k`` of the generator ``S``.

    ``symmetric_only`` skips the left product when ``A`` is Hermitian, where
    both products have the same norm.
    """
    A = as_operator(A)
    _check(A, S)
    if k < 0:
        raise ValueError("k must be >= 0")
    sym = symmetric_only and is_hermitian(A)
    left, right = _pair(_in_basis(A, S), S.eigenvalues, f(S.eigenvalues), k, sym)
    return SeminormValue(f, int(k), reference, left, right)


def seminorm_grid(
    A: Any,
    S: SpectralDecomposition,
    F_set: Iterable[TestFunction] = DEFAULT_F_SET,
    k_max: int = DEFAULT_K_MAX,
    *,
    reference: str = "H0",
    symmetric_only: bool = False,
) -> list[SeminormValue]:
    """All ``(f, k)`` pairs, ``f`` in the given order and ``k = 0 .. k_max`` innermost."""
    F_set = tuple(F_set)
    if not F_set:
        raise ValueError("F_set must not be empty")
    A = as_operator(A)
    _check(A, S)
    At = _in_basis(A, S)
    sym = symmetric_only and is_hermitian(A)
    out = []
    for f in F_set:
        fv = f(S.eigenvalues)
        for k in range(k_max + 1):
            left, right = _pair(At, S.eigenvalues, fv, k, sym)
            out.append(SeminormValue(f, k, reference, left, right))
    return out


def seminorm_sup(A: Any, S: SpectralDecomposition, F_set=DEFAULT_F_SET, k_max: int = DEFAULT_K_MAX) -> float:
    """Largest seminorm over the tested grid."""
    return max(v.value for v in seminorm_grid(A, S, F_set, k_max))


@dataclass(frozen=True)
class EquivalenceProfile:
    k: int
    ell: int
    bounded: bool
    rows: tuple[tuple[int, float, float], ...]  # (dim, C_left, C_right)


def equivalence_profile(
    m: ModelInstance,
    k: int,
    dims: Sequence[int],
    *,
    ell_max: int | None = None,
    max_variation: float = 0.1,
    symmetrize: bool = False,
) -> EquivalenceProfile:
    """``C_left = ||H^k H0^-ell||`` and ``C_right = ||H0^k H^-ell||`` across dims.

    ``ell`` is the smallest exponent up to ``ell_max`` (default ``k + 4``)
    for which both profiles vary by less than ``max_variation`` over the top
    octave of dims.  If none qualifies the profile at ``ell_max`` is returned
    with ``bounded=False``.
    """
    ell_max = k + 4 if ell_max is None else ell_max
    spectra = []
    for d in dims:
        md = m.rebuild(int(d))
        H, _ = shifted_hamiltonian(md, symmetrize)
        spectra.append((int(d), md.spectral(), hermitian_eig(H)))
    last = None
    for ell in range(ell_max + 1):
        rows = []
        for d, S0, SH in spectra:
            left = matrix_function(SH, lambda x: x**k) @ matrix_function(S0, lambda x: x ** (-float(ell)))
            right = matrix_function(S0, lambda x: x**k) @ matrix_function(SH, lambda x: x ** (-float(ell)))
            rows.append((d, operator_norm(left), operator_norm(right)))
        ok = all(
            profile_variation([(d, r[i]) for d, *r in rows]) < max_variation for i in (0, 1)
        )
        last = EquivalenceProfile(int(k), ell, ok, tuple(rows))
        if ok:
            return last
    return last
