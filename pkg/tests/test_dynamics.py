import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from cutofflab.cutoff import CutoffFamily, cutoff_hamiltonian, default_L_grid, label_cutoff, spectral_projection
from cutofflab.dynamics import (
    DELTA_PREFACTOR,
    DynamicsScene,
    adjoint_series,
    alpha_derivative,
    beta_derivative,
    beta_map,
    closing_constant,
    conjugate,
    delta_defect,
    delta_L,
    derivation,
    eta_map,
    example_bound_check,
    flow_vector_distance,
    g_L_direct,
    g_L_integral,
    g_L_ode_residual,
    heisenberg,
    iterated_commutator,
    leibniz_defect,
    lemma59_quantity,
    lemma61_quantity,
    nilpotency_order,
    prop60_integrals,
    prop60_integrand_bound,
    v_derivative,
    v_map,
)
from cutofflab.errors import DimensionMismatch, NotHermitianH, NotNilpotent, QuadratureBudgetExceeded
from cutofflab.config import use_tolerances
from cutofflab.linop import identity, max_abs, operator_norm, propagator
from cutofflab.models import build_model, fock_ladder, observable
from cutofflab.seminorms import DEFAULT_F_SET, TestFunction, seminorm_sup

from conftest import random_hermitian

EXP = TestFunction("exponential")


def proj(m, L):
    return spectral_projection(m.spectral(), L)


def top(m):
    return float(m.spectral().eigenvalues[-1])


def is_nonincreasing(values, slack=1e-9):
    return all(b <= a + slack for a, b in zip(values, values[1:]))


# -- heisenberg -------------------------------------------------------------------


def test_heisenberg_examples(rng):
    H = random_hermitian(rng, 6)
    A = random_hermitian(rng, 6)
    np.testing.assert_allclose(heisenberg(H, A, 0.0), A, atol=1e-14)
    for t in (0.3, 2.0, -7.0):
        assert max_abs(heisenberg(H, H, t) - H) <= 1e-10


def test_heisenberg_rotating_frame():
    a, ad = fock_ladder(12)
    w = 0.7
    for t in (0.5, 1.0, 3.0):
        assert max_abs(heisenberg(w * ad @ a, a, t) - np.exp(-1j * w * t) * a) <= 1e-9


def test_heisenberg_dimension_check():
    with pytest.raises(DimensionMismatch):
        heisenberg(np.eye(2), np.eye(3), 1.0)


# -- g_L -----------------------------------------------------------------------


def test_g_direct_trivial_cases():
    m = build_model("number-aN-sym", 16)
    Q = proj(m, 8.5)
    assert max_abs(g_L_direct(m, Q, 0.0)) == 0.0
    for t in (0.5, 3.0):
        assert max_abs(g_L_direct(m, identity(16), t)) <= 1e-12


def test_g_direct_commuting_oracle():
    m = build_model("commuting", 20)
    h = np.diag(m.H).real
    lam = np.diag(m.H0).real
    for L in (5.5, 12.5):
        for t in (0.5, 1.0, 2.0):
            want = max(abs(1 - np.exp(1j * h[j] * t)) for j in range(20) if lam[j] > L)
            assert operator_norm(g_L_direct(m, proj(m, L), t)) == pytest.approx(want, abs=1e-12)


def test_g_integral_empty_interval():
    m = build_model("oscillator-linear", 16)
    assert max_abs(g_L_integral(m, proj(m, 6.0), 0.0)) == 0.0
    with pytest.raises(ValueError):
        g_L_integral(m, proj(m, 6.0), -1.0)


@pytest.mark.parametrize("name", ["number-aN-sym", "oscillator-linear"])
def test_g_integral_matches_direct(name):
    m = build_model(name, 16)
    Q = proj(m, 8.0)
    val, res = g_L_integral(m, Q, 2.0, full_output=True)
    assert max_abs(val - g_L_direct(m, Q, 2.0)) <= 1e-9
    assert res.panels >= 2


def test_g_integral_convergence_order():
    # 8-point panels: halving the panel width divides the error by about 2^16
    m = build_model("number-aN-sym", 16)
    Q = proj(m, 8.5)
    ref = g_L_direct(m, Q, 1.0)
    e1 = max_abs(g_L_integral(m, Q, 1.0, panels=1) - ref)
    e2 = max_abs(g_L_integral(m, Q, 1.0, panels=2) - ref)
    assert 2.0**-18 < e2 / e1 < 2.0**-14


def test_g_integral_budget():
    m = build_model("number-aN-sym", 16)
    with use_tolerances({"quad_max_panels": 2}):
        with pytest.raises(QuadratureBudgetExceeded):
            g_L_integral(m, proj(m, 8.5), 4.0)


def test_g_ode_residual_second_order():
    m = build_model("number-aN-sym", 16)
    Q = proj(m, 8.5)
    r = [g_L_ode_residual(m, Q, 1.0, dt) for dt in (1e-2, 5e-3, 2.5e-3)]
    for a, b in zip(r, r[1:]):
        assert a / b == pytest.approx(4.0, rel=0.05)


def test_scene_validation():
    m = build_model("commuting", 8)
    fam = CutoffFamily.build(m.spectral(), [2.5, 4.5])
    DynamicsScene(m, fam, m.B, (0.0, 1.0))
    with pytest.raises(ValueError):
        DynamicsScene(m, fam, m.B, (1.0, 0.5))
    with pytest.raises(DimensionMismatch):
        DynamicsScene(m, fam, np.eye(4), (0.0, 1.0))


# -- lemma59 / prop60 / lemma61 -----------------------------------------------------


def test_lemma59_full_cutoff_is_zero():
    m = build_model("number-aN", 32)
    for s, k in [(0, 0), (2, 1), (4, 3)]:
        assert lemma59_quantity(m, proj(m, top(m)), s, k) <= 1e-11


def test_lemma59_commuting_closed_form():
    m = build_model("commuting", 32)
    lam = np.diag(m.H0).real
    h = np.diag(m.H).real
    grid = default_L_grid(m.spectral())
    for s, k in [(0, 0), (2, 1), (3, 3)]:
        vals = [lemma59_quantity(m, proj(m, L), s, k) for L in grid]
        want = [max(lam[lam > L] ** (-s) * np.abs(h[lam > L]) * lam[lam > L] ** k) for L in grid]
        np.testing.assert_allclose(vals, want, rtol=1e-11)
        if k < s - 1:
            assert is_nonincreasing(vals)


def test_lemma59_smallest_s_for_aN():
    m = build_model("number-aN", 64, {"n": 2})
    Q = proj(m, top(m) / 2)
    vals = [lemma59_quantity(m, Q, s, 1) for s in range(8)]
    assert is_nonincreasing(vals, 0.0)
    first = next(s for s, v in enumerate(vals) if v < 1e-3)
    # on this truncation the sweep s <= 4 ends just above the threshold
    assert first == 5
    assert 1e-3 < vals[4] < 2e-3


def test_prop60_unit_bound_for_s0():
    m = build_model("oscillator-linear", 24)
    for L in default_L_grid(m.spectral()):
        for f in DEFAULT_F_SET[:2]:
            assert prop60_integrand_bound(m, proj(m, L), f, 0, 1.5) <= 1.5 * (1 + 1e-12)


def test_prop60_commuting_closed_form():
    m = build_model("commuting", 24)
    lam = np.diag(m.H0).real
    pairs = [(f, s) for f in DEFAULT_F_SET for s in range(4)]
    for L in (4.5, 9.5):
        got = prop60_integrals(m, proj(m, L), pairs, 2.0)
        want = [2.0 * float(np.max(f(lam) * lam**s)) for f, s in pairs]
        np.testing.assert_allclose(got, want, rtol=1e-10)


def test_prop60_symmetrized_ladder_uniform():
    m = build_model("number-aN-sym", 32)
    for f in DEFAULT_F_SET:
        vals = [prop60_integrand_bound(m, proj(m, L), f, 1, 1.0) for L in default_L_grid(m.spectral())]
        assert max(vals) / min(vals) <= 1.2


def test_prop60_needs_positive_time():
    m = build_model("commuting", 8)
    with pytest.raises(ValueError):
        prop60_integrand_bound(m, proj(m, 3.5), EXP, 0, 0.0)


def test_lemma61_examples():
    m = build_model("number-aN-sym", 48)
    assert lemma61_quantity(m, proj(m, 10.5), EXP, 0, 2) == 0.0
    assert lemma61_quantity(m, proj(m, top(m)), EXP, 2, 1) <= 1e-10
    vals = [lemma61_quantity(m, proj(m, L), EXP, 2, 1) for L in default_L_grid(m.spectral())]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-4


def test_lemma61_needs_hermitian():
    m = build_model("number-aN", 16)
    with pytest.raises(NotHermitianH):
        lemma61_quantity(m, proj(m, 5.5), EXP, 1, 0)


# -- example bound for B = a^n ------------------------------------------------------


def test_example_bound_at_tau_zero():
    m = build_model("number-aN", 16, {"n": 2})
    for f in DEFAULT_F_SET:
        b = example_bound_check(m, f, 5, 0.0)
        F = f.of_matrix(m.H)
        assert b.lhs == pytest.approx(operator_norm(F @ m.H), rel=1e-12)
        assert b.holds


def test_example_bound_against_direct_evaluation():
    # band reaching past the top label is clipped to the truncation
    m = build_model("number-aN", 12, {"n": 3})
    L, tau = 10, 2.5
    H = m.H
    F = scipy.linalg.expm(-H)
    P = np.diag([1.0 if L < j <= L + 3 else 0.0 for j in range(12)])
    lhs = np.linalg.norm(F @ (H + (scipy.linalg.expm(1j * tau * H) - np.eye(12)) @ m.B @ P), 2)
    rhs = np.linalg.norm(F @ H, 2) + 2 * np.linalg.norm(F @ m.B, 2)
    b = example_bound_check(m, EXP, L, tau)
    assert b.lhs == pytest.approx(lhs, rel=1e-10)
    assert b.rhs == pytest.approx(rhs, rel=1e-10)


# -- nilpotent series -----------------------------------------------------------------


def test_iterated_commutator_examples():
    X = np.diag([1.0, 2.0])
    Y = np.array([[0.0, 1.0], [1.0, 0.0]])
    for m in range(1, 6):
        C = iterated_commutator(X, Y, m)
        assert C[0, 1] == pytest.approx((-1) ** m)
        assert C[1, 0] == pytest.approx(1.0)
    np.testing.assert_array_equal(iterated_commutator(X, np.diag([3.0, 4.0]), 3), np.zeros((2, 2)))
    np.testing.assert_array_equal(iterated_commutator(X, Y, 0), Y)


def test_nilpotency_detector():
    X = np.diag([1.0, 2.0])
    assert nilpotency_order(X, np.eye(2)) == 0
    assert nilpotency_order(X, np.array([[0.0, 1.0], [1.0, 0.0]])) is None
    # strictly upper triangular X: ad_X^m eventually vanishes
    N = np.triu(np.ones((4, 4)), 1)
    order = nilpotency_order(N, np.diag([1.0, 2.0, 3.0, 4.0]))
    assert order is not None
    assert max_abs(iterated_commutator(N, np.diag([1.0, 2.0, 3.0, 4.0]), order + 1)) == 0.0


def test_adjoint_series_trivial(rng):
    H = random_hermitian(rng, 5)
    assert max_abs(adjoint_series(np.diag(np.arange(5.0)), np.diag(np.ones(5)), 1.3)) == pytest.approx(1.0)
    np.testing.assert_array_equal(adjoint_series(np.eye(5), H, 2.0), H)
    N = np.triu(np.ones((5, 5)), 1)
    np.testing.assert_allclose(adjoint_series(N, H, 0.0, 8), H)


def test_adjoint_series_nilpotent_pair():
    m = build_model("nilpotent-upper", 32)
    for L in default_L_grid(m.spectral(), count=4):
        HL = cutoff_hamiltonian(m, proj(m, L))
        for tau in np.linspace(-2.0, 2.0, 9):
            assert max_abs(adjoint_series(HL, m.H, tau) - conjugate(HL, m.H, tau)) <= 1e-9


def test_adjoint_series_not_nilpotent(rng):
    H = random_hermitian(rng, 4)
    K = random_hermitian(rng, 4)
    with pytest.raises(NotNilpotent):
        adjoint_series(H, K, 1.0)
    N = np.triu(np.ones((4, 4)), 1)
    with pytest.raises(NotNilpotent):
        adjoint_series(N, K, 1.0, 1)


# -- compressed flow ------------------------------------------------------------------


def test_v_map_examples():
    m = build_model("oscillator-linear", 24)
    Q = proj(m, 9.0)
    np.testing.assert_allclose(v_map(m, identity(24), 1.5), propagator(m.H, 1.5), atol=1e-12)
    np.testing.assert_allclose(v_map(m, Q, 0.0), Q, atol=1e-12)
    for L in default_L_grid(m.spectral()):
        for t in (-2.0, 0.5, 3.0):
            assert operator_norm(v_map(m, proj(m, L), t)) <= 1 + 1e-12


def test_v_map_needs_hermitian():
    m = build_model("number-aN", 16)
    with pytest.raises(NotHermitianH):
        v_map(m, proj(m, 5.5), 1.0)


def test_beta_examples():
    m = build_model("oscillator-linear", 24)
    A = observable(m, "q")
    Q = proj(m, 9.0)
    np.testing.assert_allclose(beta_map(m, identity(24), A, 1.0), heisenberg(m.H, A, 1.0), atol=1e-12)
    np.testing.assert_allclose(beta_map(m, Q, A, 0.0), Q @ A @ Q, atol=1e-12)


def test_beta_converges_for_linear_oscillator():
    m = build_model("oscillator-linear", 64)
    A = observable(m, "q")
    alpha = heisenberg(m.H, A, 1.0)
    vals = [seminorm_sup(beta_map(m, proj(m, L), A, 1.0) - alpha, m.spectral()) for L in default_L_grid(m.spectral())]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-3


@pytest.mark.parametrize("n", [1, 2])
def test_time_derivatives_against_finite_differences(n):
    m = build_model("oscillator-linear", 20)
    Q = proj(m, 8.0)
    A = observable(m, "q")
    h = 1e-3
    stencil = {1: [(-0.5, -1), (0.5, 1)], 2: [(1.0, -1), (-2.0, 0), (1.0, 1)]}[n]

    def fd(fn):
        return sum(c * fn(1.0 + j * h) for c, j in stencil) / h**n

    assert max_abs(fd(lambda t: beta_map(m, Q, A, t)) - beta_derivative(m, Q, A, 1.0, n)) <= 1e-4
    assert max_abs(fd(lambda t: heisenberg(m.H, A, t)) - alpha_derivative(m, A, 1.0, n)) <= 1e-3
    assert max_abs(fd(lambda t: v_map(m, Q, t)) - v_derivative(m, Q, 1.0, n)) <= 1e-3


def test_flow_vector_distance_vanishes_without_cutoff():
    m = build_model("oscillator-linear", 24)
    basis = m.spectral_H().eigenvectors[:, :8]
    for n in range(3):
        assert flow_vector_distance(m, identity(24), 1.0, n, 2, basis) <= 1e-9
    assert flow_vector_distance(m, proj(m, 3.0), 1.0, 0, 0, basis) > 0.1


# -- derivations ------------------------------------------------------------------------


def test_derivation_examples(rng):
    H = random_hermitian(rng, 6)
    assert max_abs(derivation(H, H)) == 0.0
    assert max_abs(derivation(H, np.eye(6))) == 0.0
    A = random_hermitian(rng, 6)
    np.testing.assert_allclose(derivation(H, A), 1j * (A @ H - H @ A))


seeds = st.integers(0, 2**32 - 1)


@given(seeds)
def test_derivation_leibniz(seed):
    rng = np.random.default_rng(seed)
    H, A, B = (random_hermitian(rng, 6) for _ in range(3))
    assert leibniz_defect(lambda X: derivation(H, X), A, B) <= 1e-10 * max(1.0, operator_norm(A) * operator_norm(B) * operator_norm(H))


def test_eta_examples():
    m = build_model("oscillator-linear", 16)
    A = observable(m, "q")
    np.testing.assert_allclose(eta_map(m, identity(16), A), derivation(m.H, A), atol=1e-14)
    assert max_abs(eta_map(m, proj(m, 7.0), m.H)) <= 1e-12


def test_eta_leibniz_fails():
    m = build_model("oscillator-linear", 32)
    Q = proj(m, 15.0)
    A, B = observable(m, "random", 1), observable(m, "random", 2)
    assert leibniz_defect(lambda X: eta_map(m, Q, X), A, B) > 1e-3


def test_delta_defect_trivial():
    m = build_model("number-aN-sym", 16)
    A = observable(m, "random", 3)
    assert max_abs(delta_defect(m, identity(16), A)) == 0.0
    Q = proj(m, 6.5)
    # anything block diagonal in (Q, 1 - Q) commutes with Q
    C = Q @ A @ Q + (np.eye(16) - Q) @ A @ (np.eye(16) - Q)
    assert max_abs(delta_defect(m, Q, C)) <= 1e-13


@pytest.mark.parametrize("name", ["number-aN-sym", "oscillator-linear", "number-aN"])
def test_delta_closure(name):
    m = build_model(name, 24)
    for L in default_L_grid(m.spectral()):
        Q = proj(m, L)
        HL = cutoff_hamiltonian(m, Q)
        for seed in range(5):
            A = observable(m, "random-dense", seed)
            assert max_abs(delta_L(m, Q, A) - derivation(HL, A)) <= 1e-11


def test_closing_constant_is_minus_i():
    m = build_model("oscillator-linear", 16)
    Q = proj(m, 7.0)
    c = closing_constant(m, Q, observable(m, "random", 0))
    assert abs(c - DELTA_PREFACTOR) <= 1e-12
    assert DELTA_PREFACTOR == -1j
    assert math.isnan(closing_constant(m, identity(16), observable(m, "random", 0)).real)


def test_delta_L_is_a_derivation():
    m = build_model("oscillator-linear", 24)
    Q = proj(m, 11.0)
    A, B = observable(m, "random", 4), observable(m, "random", 5)
    assert leibniz_defect(lambda X: delta_L(m, Q, X), A, B) <= 1e-10
