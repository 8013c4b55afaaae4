"""Catalog of (H0, B) pairs on a truncated Fock space.

Everything is built algebraically from ladder operators.  Polynomials in
``a`` and ``a^dagger`` are *compressed* onto the first ``dim`` Fock states:
the product is formed in a padded space and then truncated, so e.g.
``p^2 + q^2`` is exactly ``2N + 1`` instead of carrying a corner defect.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .errors import BadDimension, BadParams, NotHermitian, NotHermitianH, SingularResolvent, UnknownModel
from .linop import (
    OperatorMatrix,
    hermitian_eig,
    hermiticity,
    is_hermitian,
    matrix_function,
    max_abs,
    operator_norm,
)

__all__ = [
    "ModelInstance",
    "RelativeBoundEstimate",
    "CATALOG",
    "ENGINEERED",
    "fock_ladder",
    "compress",
    "build_model",
    "list_models",
    "observable",
    "random_banded_hermitian",
    "random_hermitian",
    "relative_bound_profile",
    "cross_bound_profile",
    "profile_variation",
    "completing_square_defects",
    "ladder_shift_defect",
    "shifted_hamiltonian",
]


def fock_ladder(dim: int) -> tuple[OperatorMatrix, OperatorMatrix]:
    """Annihilation and creation operators truncated to ``dim`` levels."""
    if dim < 2:
        raise BadDimension(f"ladder operators need dim >= 2, got {dim}")
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(np.complex128)
    return a, a.conj().T.copy()


def compress(poly: Callable[[OperatorMatrix, OperatorMatrix], OperatorMatrix], dim: int, degree: int) -> OperatorMatrix:
    """Compression onto ``dim`` levels of a polynomial of the given degree."""
    a, ad = fock_ladder(dim + max(int(degree), 0))
    return np.ascontiguousarray(poly(a, ad)[:dim, :dim])


def _q(a, ad):
    return (a + ad) / math.sqrt(2.0)


def _p(a, ad):
    return 1j * (ad - a) / math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class ModelInstance:
    name: str
    dim: int
    H0: OperatorMatrix
    B: OperatorMatrix
    shift: float
    params: Mapping[str, Any]
    metadata: Mapping[str, Any] = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def H(self) -> OperatorMatrix:
        return self.H0 + self.B

    @property
    def b_is_hermitian(self) -> bool:
        return bool(self.metadata.get("hermitian_B", False))

    def spectral(self):
        """Cached eigendecomposition of H0."""
        if "S0" not in self._cache:
            self._cache["S0"] = hermitian_eig(self.H0)
        return self._cache["S0"]

    def spectral_H(self):
        """Cached eigendecomposition of H; raises if H is not Hermitian."""
        if "SH" not in self._cache:
            if not is_hermitian(self.H):
                raise NotHermitianH(f"model {self.name!r}: H = H0 + B is not Hermitian")
            self._cache["SH"] = hermitian_eig(self.H)
        return self._cache["SH"]

    def rebuild(self, dim: int) -> "ModelInstance":
        return build_model(self.name, dim, dict(self.params))

    def describe(self) -> dict:
        return {"name": self.name, "dim": self.dim, "shift": self.shift, "params": dict(self.params), **self.metadata}


@dataclass(frozen=True)
class _Param:
    kind: type
    default: Any
    doc: str


@dataclass(frozen=True)
class _Entry:
    name: str
    anchor: str
    params: Mapping[str, _Param]
    build: Callable[[int, dict], tuple[OperatorMatrix, OperatorMatrix]]
    hermitian_B: bool


def _number_h0(dim):
    # built from integers: sqrt(k)**2 from a^dagger a is not exactly k
    return np.diag(np.arange(dim, dtype=float)).astype(np.complex128)


def _osc_h0(dim):
    # p^2 + q^2 compresses to exactly 2N + 1 (checked in the tests)
    return np.diag(2.0 * np.arange(dim) + 1.0).astype(np.complex128)


def _build_aN(dim, p):
    n = p["n"]
    B = p["coupling"] * compress(lambda a, ad: np.linalg.matrix_power(a, n), dim, 0)
    return _number_h0(dim), B


def _build_aN_sym(dim, p):
    n = p["n"]

    def poly(a, ad):
        return np.linalg.matrix_power(a, n) + np.linalg.matrix_power(ad, n)

    return _number_h0(dim), p["coupling"] * compress(poly, dim, n)


def _build_linear(dim, p):
    return _osc_h0(dim), p["alpha"] * compress(_q, dim, 1)


def _build_minus_q2(dim, p):
    return _osc_h0(dim), -p["strength"] * compress(lambda a, ad: _q(a, ad) @ _q(a, ad), dim, 2)


def _build_rank_one(dim, p):
    c = (np.arange(dim, dtype=float) + 1.0) ** (-p["decay"])
    c /= np.linalg.norm(c)
    return _number_h0(dim), np.outer(c, c).astype(np.complex128)


_G = {
    "cos": np.cos,
    "inv": lambda x: 1.0 / x,
    "tanh": np.tanh,
}


def _commuting_g(p) -> Callable[[np.ndarray], np.ndarray]:
    g = _G[p["g"]]
    c = p["c"]
    return lambda x: c * g(x)


# both builders below act on the shifted spectrum 1..dim, which is what
# build_model produces from the raw number operator


def _build_commuting(dim, p):
    levels = np.arange(1.0, dim + 1.0)
    return _number_h0(dim), np.diag(_commuting_g(p)(levels)).astype(np.complex128)


def _build_nilpotent(dim, p):
    a, _ = fock_ladder(dim)
    return _number_h0(dim), p["eps"] * a - np.diag(np.arange(1.0, dim + 1.0))


_N = {"n": _Param(int, 2, "power of the annihilation operator")}

CATALOG: dict[str, _Entry] = {
    e.name: e
    for e in [
        _Entry(
            "number-aN",
            "H0 = a^dagger a, B = a^n (non-symmetric perturbation)",
            {**_N, "coupling": _Param(float, 1.0, "prefactor of a^n")},
            _build_aN,
            False,
        ),
        _Entry(
            "number-aN-sym",
            "H0 = a^dagger a, B = a^n + (a^dagger)^n (symmetrized variant)",
            {**_N, "coupling": _Param(float, 0.1, "prefactor of a^n + (a^dagger)^n")},
            _build_aN_sym,
            True,
        ),
        _Entry(
            "oscillator-linear",
            "H0 = p^2 + q^2, B = alpha q",
            {"alpha": _Param(float, 1.0, "strength of the linear term")},
            _build_linear,
            True,
        ),
        _Entry(
            "oscillator-minus-q2",
            "H0 = p^2 + q^2, B = -q^2",
            {"strength": _Param(float, 1.0, "prefactor of -q^2")},
            _build_minus_q2,
            True,
        ),
        _Entry(
            "rank-one",
            "H0 = a^dagger a, B = projection onto f with f outside D(H0)",
            {"decay": _Param(float, 1.0, "coefficients of f decay like (n+1)^-decay")},
            _build_rank_one,
            True,
        ),
        _Entry(
            "commuting",
            "H0 = a^dagger a, B = c g(H0) with bounded g",
            {
                "g": _Param(str, "cos", "one of " + ", ".join(sorted(_G))),
                "c": _Param(float, 0.5, "amplitude of g"),
            },
            _build_commuting,
            True,
        ),
    ]
}

ENGINEERED: dict[str, _Entry] = {
    "nilpotent-upper": _Entry(
        "nilpotent-upper",
        "H0 = a^dagger a, B = eps a - H0, so H = eps a and [H_L, H] is nilpotent",
        {"eps": _Param(float, 0.5, "prefactor of a in H")},
        _build_nilpotent,
        False,
    ),
}


def list_models() -> list[dict]:
    """JSON-ready description of the catalog."""
    out = []
    for e in CATALOG.values():
        out.append(
            {
                "name": e.name,
                "anchor": e.anchor,
                "params": {
                    k: {"type": v.kind.__name__, "default": v.default, "doc": v.doc} for k, v in e.params.items()
                },
                "hermitian_B": e.hermitian_B,
            }
        )
    return out


def _resolve_params(entry: _Entry, dim: int, params: Mapping[str, Any] | None) -> dict:
    params = dict(params or {})
    unknown = set(params) - set(entry.params)
    if unknown:
        raise BadParams(f"model {entry.name!r} has no parameters {sorted(unknown)}")
    out = {}
    for key, spec in entry.params.items():
        value = params.get(key, spec.default)
        try:
            value = spec.kind(value)
        except (TypeError, ValueError) as exc:
            raise BadParams(f"parameter {key}={value!r} is not a {spec.kind.__name__}") from exc
        out[key] = value
    if "n" in out and not 1 <= out["n"] < dim:
        raise BadParams(f"need 1 <= n < dim, got n={out['n']}, dim={dim}")
    if "g" in out and out["g"] not in _G:
        raise BadParams(f"g must be one of {sorted(_G)}")
    return out


def build_model(name: str, dim: int, params: Mapping[str, Any] | None = None) -> ModelInstance:
    """Build a catalog (or engineered) model, shifting H0 so its spectrum is >= 1."""
    entry = CATALOG.get(name) or ENGINEERED.get(name)
    if entry is None:
        raise UnknownModel(f"unknown model {name!r}; known: {sorted(CATALOG) + sorted(ENGINEERED)}")
    if dim < 4:
        raise BadDimension(f"models need dim >= 4, got {dim}")
    p = _resolve_params(entry, dim, params)
    H0_raw, B = entry.build(dim, p)
    lam_min = float(np.linalg.eigvalsh(H0_raw)[0])
    # a spectrum already at 1 up to round-off is left alone
    shift = 0.0 if lam_min >= 1.0 - 1e-12 else 1.0 - lam_min
    H0 = H0_raw + shift * np.eye(dim)
    meta = {
        "anchor": entry.anchor,
        "hermitian_B": bool(hermiticity(B).is_hermitian),
        "engineered": name in ENGINEERED,
        "fock_diagonal_H0": bool(max_abs(H0 - np.diag(np.diag(H0))) == 0.0),
    }
    return ModelInstance(name, dim, H0, B, shift, p, meta)


def ladder_shift_defect(m: ModelInstance, n: int | None = None) -> float:
    """max-abs of ``a H0 - (H0 + I) a`` over rows ``0 .. dim-n-1`` (number family)."""
    n = int(m.params.get("n", 1) if n is None else n)
    a, _ = fock_ladder(m.dim)
    D = a @ m.H0 - (m.H0 + np.eye(m.dim)) @ a
    return max_abs(D[: m.dim - n])


# -- observables -------------------------------------------------------------


def random_banded_hermitian(dim: int, seed: int, bandwidth: int = 2) -> OperatorMatrix:
    """Seeded Hermitian matrix with O(1) entries inside a band.

    Row ``i`` is drawn from its own generator seeded by ``(seed, i)``, so the
    leading ``d x d`` block does not depend on the total dimension; this is what
    makes truncation-doubling comparisons meaningful.
    """
    X = np.zeros((dim, dim), dtype=np.complex128)
    for i in range(dim):
        rng = np.random.default_rng([seed, i])
        v = rng.normal(size=bandwidth + 1) + 1j * rng.normal(size=bandwidth + 1)
        v[0] = v[0].real
        width = min(bandwidth + 1, dim - i)
        X[i, i : i + width] = v[:width]
    return np.triu(X) + np.triu(X, 1).conj().T


def random_hermitian(dim: int, seed: int) -> OperatorMatrix:
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return 0.5 * (M + M.conj().T)


def observable(m: ModelInstance, name: str, seed: int = 0) -> OperatorMatrix:
    """Named observable on the model's truncation.

    ``random`` is banded (a legitimate element of the operator algebra);
    ``random-dense`` is a dense Hermitian matrix for purely algebraic checks.
    """
    d = m.dim
    table: dict[str, Callable[[], OperatorMatrix]] = {
        "B": lambda: m.B.copy(),
        "H0": lambda: m.H0.copy(),
        "H": lambda: m.H.copy(),
        "q": lambda: compress(_q, d, 1),
        "p": lambda: compress(_p, d, 1),
        "a": lambda: compress(lambda a, ad: a, d, 0),
        "adag": lambda: compress(lambda a, ad: ad, d, 0),
        "number": lambda: compress(lambda a, ad: ad @ a, d, 0),
        "q2": lambda: compress(lambda a, ad: _q(a, ad) @ _q(a, ad), d, 2),
        "random": lambda: random_banded_hermitian(d, seed),
        "random-dense": lambda: random_hermitian(d, seed),
    }
    if name not in table:
        raise BadParams(f"unknown observable {name!r}; known: {sorted(table)}")
    return table[name]()


# -- finite-dimensional domain diagnostics ------------------------------------


@dataclass(frozen=True)
class RelativeBoundEstimate:
    a_values: tuple[tuple[float, float], ...]
    a_inf: float
    b_witness: float


def relative_bound_profile(m: ModelInstance, lambda_grid: Sequence[float]) -> RelativeBoundEstimate:
    """``a(lambda) = ||B (H0 - i lambda)^-1||`` on an ascending positive grid.

    ``b_witness = a_inf * lambda_max`` makes ``||B phi|| <= a_inf ||H0 phi|| +
    b ||phi||`` hold, since ``||(H0 - i lambda) phi|| <= ||H0 phi|| + lambda ||phi||``.
    """
    grid = np.asarray(lambda_grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("lambda_grid must be positive and strictly ascending")
    if not is_hermitian(m.H0):
        raise NotHermitian("H0 must be Hermitian")
    S = m.spectral()
    values = []
    for lam in grid:
        denom = S.eigenvalues - 1j * lam
        if np.any(np.abs(denom) == 0):
            raise SingularResolvent(f"H0 - i*{lam} is singular")
        R = matrix_function(S, lambda x, lam=lam: 1.0 / (x - 1j * lam))
        values.append((float(lam), operator_norm(m.B @ R)))
    a_inf = values[-1][1]
    return RelativeBoundEstimate(tuple(values), a_inf, a_inf * float(grid[-1]))


def shifted_hamiltonian(m: ModelInstance, symmetrize: bool) -> tuple[OperatorMatrix, float]:
    B = m.B
    if not is_hermitian(B):
        if not symmetrize:
            raise NotHermitianH(f"model {m.name!r} has a non-Hermitian B; pass symmetrize=True")
        B = 0.5 * (B + B.conj().T)
    H = m.H0 + B
    lam_min = float(np.linalg.eigvalsh(0.5 * (H + H.conj().T))[0])
    shift = max(0.0, 1.0 - lam_min)
    return H + shift * np.eye(m.dim), shift


def cross_bound_profile(
    m: ModelInstance, k: int, ell: int, dims: Sequence[int], *, symmetrize: bool = False
) -> list[tuple[int, float]]:
    """``C(dim) = ||H0^k H^-ell||`` with ``H`` shifted so its spectrum is >= 1.

    A profile that settles as ``dim`` grows is evidence that ``H0^k H^-ell``
    is bounded; a growing one is evidence against.
    """
    rows = []
    for d in dims:
        md = m.rebuild(int(d))
        H, _ = shifted_hamiltonian(md, symmetrize)
        SH = hermitian_eig(H)
        S0 = md.spectral()
        left = matrix_function(S0, lambda x: x**k)
        right = matrix_function(SH, lambda x: x ** (-float(ell)))
        rows.append((int(d), operator_norm(left @ right)))
    return rows


def profile_variation(rows: Sequence[tuple[int, float]]) -> float:
    """Relative spread ``(max - min) / min`` over the top octave of dims."""
    top = max(d for d, _ in rows)
    vals = [c for d, c in rows if d >= top / 2]
    lo = min(vals)
    if lo <= 0:
        return 0.0 if max(vals) <= 0 else math.inf
    return (max(vals) - lo) / lo


def completing_square_defects(m: ModelInstance) -> dict[str, float]:
    """Check ``p^2 + q^2 + alpha q`` against the four sign choices of
    ``p^2 + (q - beta)^2 + c`` with ``beta = +-alpha/2`` and ``c = +-beta^2``.

    Only ``beta = -alpha/2, c = -beta^2`` closes for ``alpha != 0``.
    """
    if m.name != "oscillator-linear":
        raise BadParams("completing the square applies to oscillator-linear only")
    alpha = float(m.params["alpha"])
    d = m.dim
    H = m.H - m.shift * np.eye(d)
    out = {}
    for bsign, btag in ((1, "+alpha/2"), (-1, "-alpha/2")):
        beta = bsign * alpha / 2

        def poly(a, ad, beta=beta):
            qb = _q(a, ad) - beta * np.eye(a.shape[0])
            return _p(a, ad) @ _p(a, ad) + qb @ qb

        base = compress(poly, d, 2)
        for csign, ctag in ((1, "+beta^2"), (-1, "-beta^2")):
            rhs = base + csign * beta**2 * np.eye(d)
            out[f"beta={btag},c={ctag}"] = max_abs(H - rhs)
    return out

