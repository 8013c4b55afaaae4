"""Full and cut-off dynamics: propagator differences, Heisenberg maps,
compressed flows and the derivations built from them.

Conventions used throughout:

* ``delta(A) = i [A, H]`` for every generator ``H``;
* ``alpha^t(A) = e^{iHt} A e^{-iHt}``, so ``d/dt alpha^t(A) = alpha^t(i [H, A])``;
* the adjoint series uses ``C_0 = Y``, ``C_{j+1} = [X, C_j]`` and the
  coefficients ``(i tau)^j / j!``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np
import scipy.linalg

from .config import get_tolerances
from .cutoff import CutoffFamily, cutoff_hamiltonian, label_cutoff, spectral_projection
from .errors import ConvergenceFailure, DimensionMismatch, NotNilpotent, SpectrumBelowOne
from .linop import (
    OperatorMatrix,
    as_operator,
    commutator,
    anticommutator,
    general_matrix_function,
    hermitian_eig,
    identity,
    is_hermitian,
    matrix_function,
    max_abs,
    operator_norm,
    propagator,
    spectral_propagator,
)
from .models import ModelInstance
from .quadrature import QuadratureResult, gauss_legendre, integrate, integrate_adaptive
from .seminorms import TestFunction

__all__ = [
    "DynamicsScene",
    "Evolver",
    "heisenberg",
    "g_L_direct",
    "g_L_integral",
    "g_L_ode_residual",
    "lemma59_quantity",
    "prop60_integrals",
    "prop60_integrand_bound",
    "ExampleBound",
    "eigenvector_condition",
    "example_bound_check",
    "lemma61_quantity",
    "iterated_commutator",
    "nilpotency_order",
    "adjoint_series",
    "conjugate",
    "v_map",
    "v_derivative",
    "beta_map",
    "beta_derivative",
    "alpha_derivative",
    "flow_vector_distance",
    "derivation",
    "eta_map",
    "DELTA_PREFACTOR",
    "delta_defect",
    "delta_L",
    "closing_constant",
    "leibniz_defect",
]


class Evolver:
    """``t -> e^{iHt}`` with one eigendecomposition up front when ``H`` is Hermitian.

    For non-Hermitian ``H`` every call runs ``scipy.linalg.expm`` and
    ``path`` is ``"pade"``.
    """

    def __init__(self, H: Any):
        self.H = as_operator(H)
        if is_hermitian(self.H):
            self._S = hermitian_eig(self.H)
            self.path = "spectral"
        else:
            self._S = None
            self.path = "pade"

    def __call__(self, t: float) -> OperatorMatrix:
        if self._S is not None:
            return spectral_propagator(self._S, t)
        U = scipy.linalg.expm(1j * t * self.H)
        if not np.all(np.isfinite(U)):
            raise ConvergenceFailure("matrix exponential overflowed")
        return U


def _check_dims(*mats: OperatorMatrix) -> None:
    shapes = {X.shape for X in mats}
    if len(shapes) > 1:
        raise DimensionMismatch(f"dimensions differ: {sorted(shapes)}")


def _evolver(m: ModelInstance, key: Any, H: OperatorMatrix) -> Evolver:
    if key not in m._cache:
        m._cache[key] = Evolver(H)
    return m._cache[key]


def _full(m: ModelInstance) -> Evolver:
    return _evolver(m, "evolver_H", m.H)


def heisenberg(H: Any, A: Any, t: float) -> OperatorMatrix:
    """``e^{iHt} A e^{-iHt}``."""
    H, A = as_operator(H), as_operator(A)
    _check_dims(H, A)
    ev = Evolver(H)
    return ev(t) @ A @ ev(-t)


@dataclass(frozen=True, eq=False)
class DynamicsScene:
    model: ModelInstance
    cutoffs: CutoffFamily
    observable: OperatorMatrix
    times: tuple[float, ...]

    def __post_init__(self) -> None:
        d = self.model.dim
        if self.cutoffs.source.dim != d or self.observable.shape != (d, d):
            raise DimensionMismatch("model, cutoffs and observable must share one dimension")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("time grid must be strictly ascending")


# -- propagator differences -----------------------------------------------------


def g_L_direct(m: ModelInstance, Q: OperatorMatrix, t: float) -> OperatorMatrix:
    """``e^{iH_L t} - e^{iHt}``."""
    HL = cutoff_hamiltonian(m, Q)
    return propagator(HL, t) - propagator(m.H, t)


def g_L_integral(
    m: ModelInstance,
    Q: OperatorMatrix,
    t: float,
    *,
    panels: int | None = None,
    order: int = 8,
    full_output: bool = False,
):
    """``i int_0^t e^{iH_L(t-s)} (H_L - H) e^{iHs} ds`` by Gauss-Legendre.

    With ``panels`` given a fixed composite rule is used; otherwise panels are
    doubled until successive values agree (see :func:`quadrature.integrate`).
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    HL = cutoff_hamiltonian(m, Q)
    D = HL - m.H
    eL, eH = Evolver(HL), _full(m)

    def integrand(s: float) -> OperatorMatrix:
        return eL(t - s) @ D @ eH(s)

    if t == 0:
        res = QuadratureResult(np.zeros_like(D), 0, 0.0)
    elif panels is not None:
        res = QuadratureResult(gauss_legendre(integrand, 0.0, t, panels, order), panels, math.nan)
    else:
        res = integrate(integrand, 0.0, t, order=order)
    value = 1j * res.value
    return (value, res) if full_output else value


def g_L_ode_residual(m: ModelInstance, Q: OperatorMatrix, t: float, dt: float) -> float:
    """max-abs of the central difference of ``g_L`` minus ``iH_L g_L + i(H_L - H)e^{iHt}``."""
    HL = cutoff_hamiltonian(m, Q)
    eL, eH = Evolver(HL), _full(m)

    def g(s: float) -> OperatorMatrix:
        return eL(s) - eH(s)

    fd = (g(t + dt) - g(t - dt)) / (2 * dt)
    rhs = 1j * HL @ g(t) + 1j * (HL - m.H) @ eH(t)
    return max_abs(fd - rhs)


# -- uniform bounds along the cut-off -------------------------------------------


def _check_spectrum(m: ModelInstance) -> None:
    if m.spectral().eigenvalues[0] < 1.0 - get_tolerances().tie:
        raise SpectrumBelowOne("H0 spectrum must be >= 1")


def lemma59_quantity(m: ModelInstance, Q: OperatorMatrix, s: int, k: int) -> float:
    """``||H0^-s (H_L - H) H0^k||``."""
    _check_spectrum(m)
    S = m.spectral()
    HL = cutoff_hamiltonian(m, Q)
    At = S.eigenvectors.conj().T @ (HL - m.H) @ S.eigenvectors
    lam = S.eigenvalues
    return operator_norm((lam ** (-float(s)))[:, None] * At * (lam**k)[None, :])


def prop60_integrals(
    m: ModelInstance,
    Q: OperatorMatrix,
    pairs: Sequence[tuple[TestFunction, int]],
    T: float,
    *,
    order: int = 8,
) -> list[float]:
    """``int_0^T ||f(H0) e^{iH_L(T-t')} H0^s|| dt'`` for every ``(f, s)`` in ``pairs``.

    All pairs share the propagator evaluations, so the integrand is
    vector-valued and the refinement stops once every component agrees.
    Norms have kinks where the top singular value changes branch, hence the
    locally adaptive rule.
    """
    if T <= 0:
        raise ValueError("T must be > 0")
    _check_spectrum(m)
    S = m.spectral()
    U, lam = S.eigenvectors, S.eigenvalues
    weights = [(f(lam), lam ** float(s)) for f, s in pairs]
    ev = Evolver(cutoff_hamiltonian(m, Q))

    def integrand(tp: float) -> np.ndarray:
        Et = U.conj().T @ ev(T - tp) @ U
        return np.array([operator_norm(fv[:, None] * Et * sv[None, :]) for fv, sv in weights])

    return [float(v) for v in np.real(integrate_adaptive(integrand, 0.0, T, order=order).value)]


def prop60_integrand_bound(
    m: ModelInstance, Q: OperatorMatrix, f: TestFunction, s: int, T: float
) -> float:
    return prop60_integrals(m, Q, [(f, s)], T)[0]


@dataclass(frozen=True)
class ExampleBound:
    lhs: float
    rhs: float
    # eigenvector condition number of H (inf if H is defective)
    cond: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + 1e-8


def _f_of_H(m: ModelInstance, f: TestFunction) -> OperatorMatrix:
    key = ("f(H)", f)
    if key not in m._cache:
        m._cache[key] = f.of_matrix(m.H)
    return m._cache[key]


def eigenvector_condition(m: ModelInstance) -> float:
    if "cond_H" not in m._cache:
        try:
            _, cond = general_matrix_function(m.H, lambda x: x, cond_max=math.inf)
        except Exception:  # noqa: BLE001 - any failure means "not usefully diagonalizable"
            cond = math.inf
        m._cache["cond_H"] = cond
    return m._cache["cond_H"]


def example_bound_check(m: ModelInstance, f: TestFunction, L: int, tau: float, n: int | None = None) -> ExampleBound:
    """``||f(H)(H + (e^{iH tau} - 1) B P_{L,n})||`` against ``||f(H)H|| + 2||f(H)B||``.

    ``L`` is a Fock label and ``P_{L,n}`` projects on levels ``L+1 .. L+n``.
    For the ``a^n`` model ``B = a^n`` and this is the bound used to show the
    integrand is uniform in ``L`` and ``tau``.
    """
    n = int(m.params.get("n", 1) if n is None else n)
    S = m.spectral()
    P = spectral_projection(S, label_cutoff(m, L + n)) - spectral_projection(S, label_cutoff(m, L))
    F = _f_of_H(m, f)
    H = m.H
    key = ("expH", float(tau))
    if key not in m._cache:
        m._cache[key] = _full(m)(tau)
    E = m._cache[key]
    lhs = operator_norm(F @ (H + (E - identity(m.dim)) @ m.B @ P))
    rhs = operator_norm(F @ H) + 2 * operator_norm(F @ m.B)
    return ExampleBound(lhs, rhs, eigenvector_condition(m))


def lemma61_quantity(m: ModelInstance, Q: OperatorMatrix, f: TestFunction, ell: int, k: int) -> float:
    """``||f(H)(H_L^ell - H^ell) H^k||``; needs Hermitian ``H``."""
    SH = m.spectral_H()
    if ell == 0:
        return 0.0
    HL = cutoff_hamiltonian(m, Q)
    D = np.linalg.matrix_power(HL, ell) - np.linalg.matrix_power(m.H, ell)
    Dt = SH.eigenvectors.conj().T @ D @ SH.eigenvectors
    mu = SH.eigenvalues
    return operator_norm(f(mu)[:, None] * Dt * (mu**k)[None, :])


# -- nilpotent commutator series ------------------------------------------------


def iterated_commutator(X: Any, Y: Any, m: int) -> OperatorMatrix:
    """``C_m`` with ``C_1 = [X, Y]`` and ``C_{j+1} = [X, C_j]``; ``C_0 = Y``."""
    if m < 0:
        raise ValueError("m must be >= 0")
    C = as_operator(Y)
    for _ in range(m):
        C = commutator(X, C)
    return C


def nilpotency_order(X: Any, Y: Any, max_order: int | None = None) -> int | None:
    """Smallest ``m`` with ``||C_{m+1}|| <= tol.nilpotent * ||C_1||``, or None.

    Returns 0 when ``X`` and ``Y`` commute.
    """
    X, Y = as_operator(X), as_operator(Y)
    max_order = 2 * X.shape[0] if max_order is None else max_order
    C = commutator(X, Y)
    c1 = operator_norm(C)
    if c1 == 0.0:
        return 0
    tol = get_tolerances().nilpotent * c1
    for j in range(1, max_order + 1):
        C = commutator(X, C)
        if operator_norm(C) <= tol:
            return j
    return None


def adjoint_series(X: Any, Y: Any, tau: float, m: int | None = None) -> OperatorMatrix:
    """``sum_{j=0}^m (i tau)^j / j! C_j``, which equals ``e^{iX tau} Y e^{-iX tau}``
    once ``C_{m+1} = 0``.

    Raises
    ------
    NotNilpotent
        If no such ``m`` exists (``m=None``) or the given ``m`` is too small.
    """
    X, Y = as_operator(X), as_operator(Y)
    _check_dims(X, Y)
    if m is None:
        m = nilpotency_order(X, Y)
        if m is None:
            raise NotNilpotent("iterated commutators do not vanish")
    else:
        c1 = operator_norm(commutator(X, Y))
        if operator_norm(iterated_commutator(X, Y, m + 1)) > get_tolerances().nilpotent * c1:
            raise NotNilpotent(f"C_{m + 1} does not vanish")
    total = Y.copy()
    C = Y
    for j in range(1, m + 1):
        C = commutator(X, C)
        total = total + ((1j * tau) ** j / math.factorial(j)) * C
    return total


def conjugate(X: Any, Y: Any, tau: float) -> OperatorMatrix:
    """``e^{iX tau} Y e^{-iX tau}`` by direct exponentiation."""
    ev = Evolver(X)
    return ev(tau) @ as_operator(Y) @ ev(-tau)


# -- compressed flows V_L, beta_L ------------------------------------------------


def _propagator_H(m: ModelInstance, t: float) -> OperatorMatrix:
    SH = m.spectral_H()
    return SH.cached(("U", float(t)), lambda: spectral_propagator(SH, t))


def _ih_power(m: ModelInstance, sign: int, n: int) -> OperatorMatrix:
    SH = m.spectral_H()
    return matrix_function(SH, lambda x: (sign * 1j * x) ** n)


def v_derivative(m: ModelInstance, Q: OperatorMatrix, t: float, n: int, sign: int = 1) -> OperatorMatrix:
    """``d^n/dt^n`` of ``Q e^{i sign H t} Q``, i.e. ``Q (i sign H)^n e^{i sign H t} Q``."""
    U = _propagator_H(m, sign * t)
    core = U if n == 0 else _ih_power(m, sign, n) @ U
    return Q @ core @ Q


def v_map(m: ModelInstance, Q: OperatorMatrix, t: float) -> OperatorMatrix:
    """``V_L^t = Q e^{iHt} Q``."""
    return v_derivative(m, Q, t, 0)


def beta_map(m: ModelInstance, Q: OperatorMatrix, A: Any, t: float) -> OperatorMatrix:
    """``V_L^t A V_L^{-t}``."""
    return v_map(m, Q, t) @ as_operator(A) @ v_map(m, Q, -t)


def beta_derivative(m: ModelInstance, Q: OperatorMatrix, A: Any, t: float, n: int) -> OperatorMatrix:
    """``d^n/dt^n beta_L^t(A)`` by the Leibniz rule on the two flow factors."""
    A = as_operator(A)
    V = [v_derivative(m, Q, t, j, +1) for j in range(n + 1)]
    W = [v_derivative(m, Q, t, j, -1) for j in range(n + 1)]
    return sum(math.comb(n, j) * V[j] @ A @ W[n - j] for j in range(n + 1))


def alpha_derivative(m: ModelInstance, A: Any, t: float, n: int) -> OperatorMatrix:
    """``d^n/dt^n e^{iHt} A e^{-iHt} = e^{iHt} (i ad_H)^n(A) e^{-iHt}``."""
    D = as_operator(A)
    for _ in range(n):
        D = 1j * commutator(m.H, D)
    return _propagator_H(m, t) @ D @ _propagator_H(m, -t)


def flow_vector_distance(
    m: ModelInstance, Q: OperatorMatrix, t: float, n: int, power: int, basis: OperatorMatrix
) -> float:
    """``sup ||H^power (d^n V_L^t - d^n e^{iHt}) psi||`` over unit ``psi`` in span(basis).

    ``basis`` holds orthonormal columns, so the supremum is an operator norm.
    """
    exact = _propagator_H(m, t) if n == 0 else _ih_power(m, 1, n) @ _propagator_H(m, t)
    D = v_derivative(m, Q, t, n) - exact
    Hp = np.linalg.matrix_power(m.H, power)
    # rectangular, so not operator_norm (which insists on square input)
    return float(np.linalg.norm(Hp @ D @ np.asarray(basis), 2))


# -- derivations -----------------------------------------------------------------


def derivation(H_gen: Any, A: Any) -> OperatorMatrix:
    """``i [A, H_gen]``."""
    return 1j * commutator(A, H_gen)


def eta_map(m: ModelInstance, Q: OperatorMatrix, A: Any) -> OperatorMatrix:
    """``Q delta(A) Q`` with ``delta`` generated by the full ``H``."""
    return Q @ derivation(m.H, A) @ Q


# fixed by requiring eta_L(A) + Delta_L(A) = i [A, H_L] identically
DELTA_PREFACTOR = -1j


def _delta_core(m: ModelInstance, Q: OperatorMatrix, A: Any) -> OperatorMatrix:
    QA = commutator(Q, A)
    return anticommutator(Q @ m.H0, QA) + Q @ m.B @ QA + QA @ m.B @ Q


def delta_defect(m: ModelInstance, Q: OperatorMatrix, A: Any) -> OperatorMatrix:
    """``Delta_L(A) = -i ({Q H0, [Q, A]} + Q B [Q, A] + [Q, A] B Q)``."""
    return DELTA_PREFACTOR * _delta_core(m, Q, A)


def delta_L(m: ModelInstance, Q: OperatorMatrix, A: Any) -> OperatorMatrix:
    """``eta_L(A) + Delta_L(A)``, which is the inner derivation of ``H_L``."""
    return eta_map(m, Q, A) + delta_defect(m, Q, A)


def closing_constant(m: ModelInstance, Q: OperatorMatrix, A: Any) -> complex:
    """Least-squares ``c`` in ``i[A, H_L] - eta_L(A) = c * core(A)``.

    Returns NaN when the core vanishes (``A`` commutes with ``Q``).
    """
    D = _delta_core(m, Q, A)
    R = derivation(cutoff_hamiltonian(m, Q), A) - eta_map(m, Q, A)
    den = np.vdot(D, D)
    if abs(den) == 0:
        return complex(math.nan, math.nan)
    return complex(np.vdot(D, R) / den)


def leibniz_defect(phi: Callable[[OperatorMatrix], OperatorMatrix], A: Any, B: Any) -> float:
    """``||phi(AB) - phi(A) B - A phi(B)||``."""
    A, B = as_operator(A), as_operator(B)
    return operator_norm(phi(A @ B) - phi(A) @ B - A @ phi(B))
