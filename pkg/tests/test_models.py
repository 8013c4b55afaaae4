import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cutofflab.errors import BadDimension, BadParams, NotHermitianH, UnknownModel
from cutofflab.linop import is_hermitian, max_abs
from cutofflab.models import (
    CATALOG,
    ENGINEERED,
    ModelInstance,
    build_model,
    compress,
    completing_square_defects,
    cross_bound_profile,
    fock_ladder,
    ladder_shift_defect,
    list_models,
    observable,
    profile_variation,
    random_banded_hermitian,
    relative_bound_profile,
)

ALL_MODELS = sorted(CATALOG) + sorted(ENGINEERED)


def custom_model(H0, B, name="custom"):
    d = H0.shape[0]
    return ModelInstance(name, d, np.asarray(H0, complex), np.asarray(B, complex), 0.0, {}, {})


def test_fock_ladder_examples():
    a, _ = fock_ladder(2)
    np.testing.assert_array_equal(a, [[0, 1], [0, 0]])
    a, ad = fock_ladder(4)
    np.testing.assert_allclose(ad @ a, np.diag([0, 1, 2, 3]), atol=1e-14)
    assert a[1, 2] == pytest.approx(1.41421356, abs=1e-8)
    with pytest.raises(BadDimension):
        fock_ladder(1)


@given(st.integers(2, 40))
def test_fock_ladder_superdiagonal(d):
    a, ad = fock_ladder(d)
    np.testing.assert_allclose(np.diag(a, 1), np.sqrt(np.arange(1, d)))
    assert max_abs(a - np.diag(np.diag(a, 1), 1)) == 0
    np.testing.assert_array_equal(ad, a.conj().T)


def test_catalog_has_six_entries():
    assert len(list_models()) == 6
    assert {e["name"] for e in list_models()} == set(CATALOG)


def test_number_aN_example():
    m = build_model("number-aN", 6, {"n": 2})
    np.testing.assert_allclose(m.H0, np.diag(np.arange(1.0, 7.0)), atol=1e-14)
    assert m.B[0, 2] == pytest.approx(math.sqrt(2))
    assert not m.b_is_hermitian


def test_linear_oscillator_without_coupling_is_unperturbed():
    m = build_model("oscillator-linear", 6, {"alpha": 0})
    assert max_abs(m.B) == 0
    np.testing.assert_array_equal(m.H, m.H0)


def test_rank_one_projector():
    m = build_model("rank-one", 4)
    assert np.trace(m.B).real == pytest.approx(1.0, abs=1e-12)
    assert max_abs(m.B @ m.B - m.B) <= 1e-12
    ev = np.linalg.eigvalsh(build_model("rank-one", 16).B)
    np.testing.assert_allclose(ev, [0] * 15 + [1], atol=1e-12)


def test_oscillator_h0_is_exact_without_corner():
    m = build_model("oscillator-linear", 8)
    p2q2 = compress(lambda a, ad: (1j * (ad - a)) @ (1j * (ad - a)) / 2 + (a + ad) @ (a + ad) / 2, 8, 2)
    assert max_abs(p2q2 - m.H0) <= 1e-13
    np.testing.assert_allclose(np.diag(m.H0).real, 2 * np.arange(8) + 1, atol=1e-12)
    assert m.shift == 0.0


@pytest.mark.parametrize("name", ALL_MODELS)
def test_model_invariants(name):
    m = build_model(name, 24)
    assert np.linalg.eigvalsh(m.H0)[0] >= 1 - 1e-10
    assert is_hermitian(m.H0)
    again = build_model(name, 24)
    assert np.array_equal(m.H0, again.H0) and np.array_equal(m.B, again.B)


def test_build_errors():
    with pytest.raises(UnknownModel):
        build_model("nope", 8)
    with pytest.raises(BadParams):
        build_model("number-aN", 6, {"n": 6})
    with pytest.raises(BadParams):
        build_model("commuting", 6, {"g": "sin"})
    with pytest.raises(BadParams):
        build_model("commuting", 6, {"wobble": 1})
    with pytest.raises(BadDimension):
        build_model("commuting", 3)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_ladder_shift_identity_on_interior(n):
    assert ladder_shift_defect(build_model("number-aN", 20, {"n": n})) == 0.0


def test_completing_square_sign():
    d = completing_square_defects(build_model("oscillator-linear", 32, {"alpha": 1.0}))
    assert d["beta=-alpha/2,c=-beta^2"] <= 1e-10
    assert min(v for k, v in d.items() if k != "beta=-alpha/2,c=-beta^2") > 0.1
    with pytest.raises(BadParams):
        completing_square_defects(build_model("commuting", 8))


def test_observables():
    m = build_model("number-aN-sym", 12)
    q = observable(m, "q")
    a, ad = fock_ladder(12)
    np.testing.assert_allclose(q, (a + ad) / math.sqrt(2), atol=1e-14)
    assert is_hermitian(observable(m, "random", 3))
    assert is_hermitian(observable(m, "random-dense", 3))
    with pytest.raises(BadParams):
        observable(m, "spin")


def test_banded_random_is_prefix_stable():
    small, big = random_banded_hermitian(10, 5), random_banded_hermitian(20, 5)
    # rows below the band edge of the small matrix coincide
    np.testing.assert_array_equal(small[:8, :8], big[:8, :8])
    assert max_abs(np.triu(big, 3)) == 0


# -- relative bound -----------------------------------------------------------------


def test_relative_bound_commuting_decays_like_c_over_lambda():
    m = build_model("commuting", 32, {"c": 0.5})
    grid = np.geomspace(1, 1e3, 8)
    est = relative_bound_profile(m, grid)
    assert est.a_inf <= 0.5 / grid[-1] + 1e-15
    vals = [a for _, a in est.a_values]
    assert np.all(np.diff(vals) <= 1e-8)


def test_relative_bound_b_equals_h0():
    H0 = np.diag(np.arange(1.0, 9.0))
    est = relative_bound_profile(custom_model(H0, H0), [0.01, 1.0, 10.0])
    mu = np.arange(1.0, 9.0)
    for lam, a in est.a_values:
        assert a == pytest.approx(np.max(mu / np.sqrt(mu**2 + lam**2)), rel=1e-12)
        assert a < 1
    assert est.a_values[0][1] > 0.9999


def test_relative_bound_zero_perturbation():
    H0 = np.diag(np.arange(1.0, 6.0))
    est = relative_bound_profile(custom_model(H0, np.zeros((5, 5))), [1.0, 2.0])
    assert all(a == 0 for _, a in est.a_values)
    with pytest.raises(ValueError):
        relative_bound_profile(custom_model(H0, H0), [2.0, 1.0])


# -- cross bound profiles ----------------------------------------------------------------


def test_cross_bound_unperturbed_is_one():
    m = build_model("oscillator-linear", 16, {"alpha": 0})
    for _, c in cross_bound_profile(m, 2, 2, [16, 32]):
        assert c == pytest.approx(1.0, abs=1e-10)


def test_cross_bound_linear_oscillator_is_bounded():
    rows = cross_bound_profile(build_model("oscillator-linear", 16), 1, 1, [16, 32, 64, 128])
    assert profile_variation(rows) < 0.1


def test_cross_bound_rank_one_grows():
    rows = cross_bound_profile(build_model("rank-one", 16), 2, 2, [16, 32, 64, 128])
    cs = [c for _, c in rows]
    assert all(b > a for a, b in zip(cs, cs[1:]))
    assert profile_variation(rows) > 0.1


def test_cross_bound_needs_hermitian_h():
    with pytest.raises(NotHermitianH):
        cross_bound_profile(build_model("number-aN", 8), 1, 1, [8])
    rows = cross_bound_profile(build_model("number-aN", 8), 1, 1, [8], symmetrize=True)
    assert rows[0][1] > 0


def test_profile_variation_uses_top_octave():
    assert profile_variation([(16, 100.0), (64, 1.0), (128, 1.05)]) == pytest.approx(0.05)
    assert profile_variation([(16, 0.0), (32, 0.0)]) == 0.0
