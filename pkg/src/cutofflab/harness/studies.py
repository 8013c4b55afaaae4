"""Study kinds and the orchestration that turns a config into a report.

Every kind declares its series up front (id, verdict rule, threshold), the
grid it sweeps (cutoffs ``L`` for most kinds) and a ``point`` function that
evaluates all series at one grid point of one truncation dimension.  Grid
points run on a thread pool; results are assembled in grid order so the
report does not depend on scheduling.
"""

from __future__ import annotations

import contextvars
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from .. import __version__
from ..config import get_tolerances, use_tolerances
from ..cutoff import (
    cutoff_hamiltonian,
    default_L_grid,
    label_cutoff,
    ladder_commutation_check,
    spectral_projection,
)
from ..dynamics import (
    adjoint_series,
    alpha_derivative,
    beta_derivative,
    conjugate,
    delta_defect,
    delta_L,
    derivation,
    eigenvector_condition,
    eta_map,
    example_bound_check,
    flow_vector_distance,
    heisenberg,
    lemma59_quantity,
    lemma61_quantity,
    leibniz_defect,
    nilpotency_order,
    prop60_integrals,
)
from ..errors import ConfigError, InsufficientPoints, LabError
from ..linop import max_abs, operator_norm, propagator
from ..models import (
    ModelInstance,
    build_model,
    completing_square_defects,
    cross_bound_profile,
    ladder_shift_defect,
    observable,
    profile_variation,
    relative_bound_profile,
)
from ..seminorms import TestFunction, equivalence_profile, seminorm_grid
from .config import StudyConfig
from .fitting import RateFit, fit_rate

__all__ = [
    "SeriesSpec",
    "Point",
    "Series",
    "ConvergenceReport",
    "run_study",
    "study_grid",
    "fk_id",
    "VERDICTS",
]

VERDICTS = ("converged", "not-converged", "skipped")
F_SET_NOTE = "verdicts hold for the tested (f, k) grid only, not for the whole test-function class"


# -- data ---------------------------------------------------------------------


@dataclass(frozen=True)
class SeriesSpec:
    """One reported series.

    ``rule`` decides the verdict:

    ``decay``          final value < ``param`` and truncation-stability delta below threshold
    ``uniform``        (max - min) / min over the grid <= ``param``
    ``identity``       max |value| <= ``param``
    ``bound``          max value (a margin lhs - rhs) <= ``param``
    ``witness``        max value > ``param``
    ``profile``        variation over the top octave of dims < ``param``
    ``nonincreasing``  successive increases <= ``param``
    """

    id: str
    rule: str
    param: float
    f_kind: str = "-"
    f_params: str = "-"
    k: int | None = None


@dataclass(frozen=True)
class Point:
    dim: int
    x: float | None
    value: float
    reason: str | None = None


@dataclass
class Series:
    spec: SeriesSpec
    points: list[Point]
    verdict: str = "skipped"
    reason: str | None = None
    final: float | None = None
    fit: RateFit | None = None
    stability: float | None = None
    extra: dict = field(default_factory=dict)

    def values(self, dim: int | None = None) -> list[float]:
        return [p.value for p in self.points if dim is None or p.dim == dim]

    def xs(self, dim: int | None = None) -> list[float | None]:
        return [p.x for p in self.points if dim is None or p.dim == dim]


@dataclass
class ConvergenceReport:
    study_id: str
    config: StudyConfig
    dims: tuple[int, ...]
    grid: tuple[float, ...]
    series: list[Series]
    extras: dict = field(default_factory=dict)
    version: str = __version__

    def counts(self) -> dict[str, int]:
        out = {v: 0 for v in VERDICTS}
        for s in self.series:
            out[s.verdict] += 1
        return out

    @property
    def exit_code(self) -> int:
        return 2 if any(s.verdict == "not-converged" for s in self.series) else 0

    def get(self, series_id: str) -> Series:
        for s in self.series:
            if s.spec.id == series_id:
                return s
        raise KeyError(series_id)


class _Fail:
    __slots__ = ("reason",)

    def __init__(self, reason: str):
        self.reason = reason


def _attempt(fn: Callable[[], float]) -> float | _Fail:
    try:
        return float(fn())
    except LabError as exc:
        return _Fail(f"{type(exc).__name__}: {exc}")


def fk_id(prefix: str, f: TestFunction, k: int) -> str:
    return f"{prefix}/{f.label}/k={k}" if prefix else f"{f.label}/k={k}"


def _fk_specs(prefix: str, cfg: StudyConfig, rule: str, param: float, ks: Iterable[int] | None = None) -> list[SeriesSpec]:
    ks = list(range(cfg.k_max + 1)) if ks is None else list(ks)
    tag = prefix.replace("/", ";")
    out = []
    for f in cfg.f_set:
        for k in ks:
            fp = f.params + (f";{tag}" if tag else "")
            out.append(SeriesSpec(fk_id(prefix, f, k), rule, param, f.kind, fp, k))
    return out


def _plain(sid: str, rule: str, param: float, k: int | None = None) -> SeriesSpec:
    return SeriesSpec(sid, rule, param, "-", sid.replace("/", ";"), k)


def _seminorm_values(prefix: str, A, S, cfg: StudyConfig) -> dict[str, float]:
    return {fk_id(prefix, v.f, v.k): v.value for v in seminorm_grid(A, S, cfg.f_set, cfg.k_max)}


# -- context and kinds -----------------------------------------------------------


@dataclass
class StudyContext:
    cfg: StudyConfig
    base: ModelInstance

    @property
    def opts(self) -> Mapping[str, Any]:
        return self.cfg.options

    def observables(self, default: Sequence[str]) -> tuple[str, ...]:
        return tuple(self.cfg.observables) if self.cfg.observables is not None else tuple(default)


class _Kind:
    name = ""
    window: tuple[float, float] | None = None  # overrides the config window when the config keeps the default
    default_count: int | None = None

    def specs(self, ctx: StudyContext) -> list[SeriesSpec]:
        raise NotImplementedError

    def grid(self, ctx: StudyContext) -> list[float]:
        return cutoff_grid(ctx.cfg, ctx.base, self)

    def point(self, ctx: StudyContext, m: ModelInstance, x: float) -> dict[str, Any]:
        raise NotImplementedError

    def finalize(self, ctx: StudyContext, series: list[Series], extras: dict) -> list[Series]:
        return series


def cutoff_grid(cfg: StudyConfig, m: ModelInstance, kind: _Kind | None = None) -> list[float]:
    spec = cfg.L_grid
    S = m.spectral()
    lam = np.sort(S.eigenvalues)
    upper = float(lam[math.ceil(m.dim / 2) - 1])
    if spec.values is not None:
        vals = sorted(float(v) for v in spec.values)
        if not spec.allow_upper and vals and vals[-1] > upper + get_tolerances().tie:
            raise ConfigError(
                f"L = {vals[-1]:g} lies above the lower half of the spectrum (max {upper:g}); "
                "set L_grid.allow_upper to override"
            )
        return vals
    window = spec.window
    count = spec.count
    if kind is not None:
        if kind.window is not None and spec.window == (0.125, 0.5):
            window = kind.window
        if kind.default_count is not None and spec.count == 12:
            count = kind.default_count
    grid = list(default_L_grid(S, count=count, placement=spec.placement, window=window))
    if not grid:
        raise ConfigError(f"dimension {m.dim} leaves no cutoffs in the requested window")
    return grid


class Lemma22(_Kind):
    """``||f(H0)(X - Q X Q) H0^k||``."""

    name = "lemma2_2"

    def specs(self, ctx):
        out = []
        for X in ctx.observables(("B", "random")):
            out += _fk_specs(f"X={X}", ctx.cfg, "decay", ctx.cfg.thresholds.final)
        return out

    def point(self, ctx, m, L):
        S = m.spectral()
        Q = spectral_projection(S, L)
        U, lam = S.eigenvectors, S.eigenvalues
        out = {}
        for X in ctx.observables(("B", "random")):
            A = observable(m, X, ctx.cfg.seed)
            Yt = U.conj().T @ (A - Q @ A @ Q) @ U
            for f in ctx.cfg.f_set:
                fv = f(lam)
                for k in range(ctx.cfg.k_max + 1):
                    out[fk_id(f"X={X}", f, k)] = operator_norm(fv[:, None] * Yt * (lam**k)[None, :])
        return out


class C1C2C3(_Kind):
    """Unperturbed scenario ``B = 0``: ``H_L = H0 Q_L`` against ``H0``."""

    name = "c1c2c3"

    def specs(self, ctx):
        cfg = ctx.cfg
        out = _fk_specs("c1", cfg, "decay", cfg.thresholds.final)
        for t in cfg.times:
            out += _fk_specs(f"c2/t={t:g}", cfg, "decay", cfg.thresholds.final)
            for A in ctx.observables(("q",)):
                out += _fk_specs(f"c3/A={A}/t={t:g}", cfg, "decay", cfg.thresholds.final)
        return out

    def point(self, ctx, m, L):
        cfg = ctx.cfg
        S = m.spectral()
        Q = spectral_projection(S, L)
        H0 = m.H0
        HL = H0 @ Q
        out = _seminorm_values("c1", HL - H0, S, cfg)
        for t in cfg.times:
            out.update(_seminorm_values(f"c2/t={t:g}", propagator(HL, t) - propagator(H0, t), S, cfg))
            for name in ctx.observables(("q",)):
                A = observable(m, name, cfg.seed)
                D = heisenberg(HL, A, t) - heisenberg(H0, A, t)
                out.update(_seminorm_values(f"c3/A={name}/t={t:g}", D, S, cfg))
        return out


class Corollary23(_Kind):
    """``||delta_L(A) - delta(A)||^{f,k}`` with ``delta_L(A) = i[A, H_L]``."""

    name = "corollary2_3"

    def specs(self, ctx):
        out = []
        for A in ctx.observables(("q", "random")):
            out += _fk_specs(f"A={A}", ctx.cfg, "decay", ctx.cfg.thresholds.final)
        return out

    def point(self, ctx, m, L):
        S = m.spectral()
        Q = spectral_projection(S, L)
        HL = cutoff_hamiltonian(m, Q)
        out = {}
        for name in ctx.observables(("q", "random")):
            A = observable(m, name, ctx.cfg.seed)
            out.update(_seminorm_values(f"A={name}", derivation(HL, A) - derivation(m.H, A), S, ctx.cfg))
        return out


class Lemma59(_Kind):
    """``||H0^-s (H_L - H) H0^k||``; per ``k`` the smallest decaying ``s`` is reported."""

    name = "lemma59"

    def _s_max(self, ctx, k):
        return int(ctx.opts.get("s_max", k + 4))

    def specs(self, ctx):
        out = []
        for k in range(ctx.cfg.k_max + 1):
            for s in range(self._s_max(ctx, k) + 1):
                out.append(_plain(f"k={k}/s={s}", "decay", ctx.cfg.thresholds.final, k))
        return out

    def point(self, ctx, m, L):
        Q = spectral_projection(m.spectral(), L)
        out = {}
        for k in range(ctx.cfg.k_max + 1):
            for s in range(self._s_max(ctx, k) + 1):
                out[f"k={k}/s={s}"] = _attempt(lambda s=s, k=k: lemma59_quantity(m, Q, s, k))
        return out

    def finalize(self, ctx, series, extras):
        chosen, search = [], {}
        for k in range(ctx.cfg.k_max + 1):
            group = [s for s in series if s.spec.k == k]
            pick = next((s for s in group if s.verdict == "converged"), group[-1])
            smallest = pick.spec.id.split("s=")[1] if pick.verdict == "converged" else None
            search[f"k={k}"] = {
                "smallest_s": None if smallest is None else int(smallest),
                "finals": {s.spec.id: s.final for s in group},
            }
            chosen.append(pick)
        extras["s_search"] = search
        return chosen


class Prop60(_Kind):
    """``int_0^T ||f(H0) e^{iH_L(T-t')} H0^s|| dt'``, checked for uniformity in ``L``."""

    name = "prop60"

    def _spread(self, ctx):
        return float(ctx.opts.get("spread", ctx.cfg.thresholds.uniform_spread))

    def specs(self, ctx):
        out = []
        for f in ctx.cfg.f_set:
            for s in range(ctx.cfg.k_max + 1):
                out.append(SeriesSpec(f"{f.label}/s={s}", "uniform", self._spread(ctx), f.kind, f.params, s))
        return out

    def point(self, ctx, m, L):
        Q = spectral_projection(m.spectral(), L)
        pairs = [(f, s) for f in ctx.cfg.f_set for s in range(ctx.cfg.k_max + 1)]
        vals = prop60_integrals(m, Q, pairs, ctx.cfg.times[-1])
        return {f"{f.label}/s={s}": v for (f, s), v in zip(pairs, vals)}


class ExampleAN(_Kind):
    """Identities and the (L, tau)-uniform bound for ``H0 = a^dagger a + 1``, ``B = a^n``.

    The grid consists of Fock labels ``L`` rather than spectral cutoffs.
    """

    name = "example_aN"

    def _taus(self, ctx):
        return [float(t) for t in ctx.opts.get("taus", np.linspace(0.0, 10.0, 10))]

    def grid(self, ctx):
        if ctx.cfg.L_grid.values is not None:
            return sorted(float(v) for v in ctx.cfg.L_grid.values)
        count = ctx.cfg.L_grid.count if ctx.cfg.L_grid.count != 12 else 10
        return [float(v) for v in np.unique(np.round(np.linspace(0, ctx.base.dim - 1, count)))]

    def specs(self, ctx):
        tol = get_tolerances().cutoff_identity
        out = [_plain("ladder", "identity", tol), _plain("HL=HQ", "identity", tol)]
        for f in ctx.cfg.f_set:
            for tau in self._taus(ctx):
                sid = f"margin/{f.label}/tau={tau:.6g}"
                out.append(SeriesSpec(sid, "bound", ctx.cfg.thresholds.bound_slack, f.kind, f"{f.params};tau={tau:.6g}"))
        return out

    def point(self, ctx, m, label):
        label = int(label)
        out = {"ladder": _attempt(lambda: ladder_commutation_check(m, label))}

        def hl_hq():
            Q = spectral_projection(m.spectral(), label_cutoff(m, label))
            return max_abs(cutoff_hamiltonian(m, Q) - m.H @ Q)

        out["HL=HQ"] = _attempt(hl_hq)
        for f in ctx.cfg.f_set:
            for tau in self._taus(ctx):
                out[f"margin/{f.label}/tau={tau:.6g}"] = _attempt(
                    lambda f=f, tau=tau: (lambda b: b.lhs - b.rhs)(example_bound_check(m, f, label, tau))
                )
        return out

    def finalize(self, ctx, series, extras):
        m = ctx.base
        extras["eigenvector_condition"] = eigenvector_condition(m)
        rhs = {}
        for f in ctx.cfg.f_set:
            try:
                rhs[f.label] = example_bound_check(m, f, 0, 0.0).rhs
            except LabError as exc:
                rhs[f.label] = f"{type(exc).__name__}: {exc}"
        extras["rhs"] = rhs
        return series


class Lemma61(_Kind):
    """``||f(H)(H_L^ell - H^ell) H^k||``."""

    name = "lemma61"

    def _ells(self, ctx):
        return [int(e) for e in ctx.opts.get("ells", (1, 2))]

    def specs(self, ctx):
        out = []
        for ell in self._ells(ctx):
            out += _fk_specs(f"ell={ell}", ctx.cfg, "decay", ctx.cfg.thresholds.final)
        return out

    def point(self, ctx, m, L):
        SH = m.spectral_H()
        Q = spectral_projection(m.spectral(), L)
        HL = cutoff_hamiltonian(m, Q)
        U, mu = SH.eigenvectors, SH.eigenvalues
        out = {}
        for ell in self._ells(ctx):
            D = np.linalg.matrix_power(HL, ell) - np.linalg.matrix_power(m.H, ell)
            Dt = U.conj().T @ D @ U
            for f in ctx.cfg.f_set:
                fv = f(mu)
                for k in range(ctx.cfg.k_max + 1):
                    out[fk_id(f"ell={ell}", f, k)] = operator_norm(fv[:, None] * Dt * (mu**k)[None, :])
        return out


class Prop62(Prop60):
    """Nilpotent commutator series plus the uniform integral bound it implies."""

    name = "prop62"
    window = (0.25, 0.5)
    default_count = 8

    def _spread(self, ctx):
        return float(ctx.opts.get("spread", 1e-6))

    def _taus(self, ctx):
        return [float(t) for t in ctx.opts.get("taus", np.linspace(-2.0, 2.0, 9))]

    def specs(self, ctx):
        tol = float(ctx.opts.get("series_tol", 1e-9))
        return [_plain("series_error", "identity", tol)] + super().specs(ctx)

    def point(self, ctx, m, L):
        Q = spectral_projection(m.spectral(), L)
        HL = cutoff_hamiltonian(m, Q)
        order = nilpotency_order(HL, m.H)

        def series_error():
            # adjoint_series raises NotNilpotent itself when order is None
            return max(
                max_abs(adjoint_series(HL, m.H, tau, order) - conjugate(HL, m.H, tau)) for tau in self._taus(ctx)
            )

        out = {"series_error": _attempt(series_error), "#order": order}
        out.update(super().point(ctx, m, L))
        return out


class Prop49(_Kind):
    """Compressed flow ``V_L^t = Q e^{iHt} Q``: seminorm and vector distances, with time derivatives."""

    name = "prop49"

    def _orders(self, ctx):
        return range(int(ctx.opts.get("n_max", 2)) + 1)

    def _powers(self, ctx):
        return range(int(ctx.opts.get("power_max", 2)) + 1)

    def specs(self, ctx):
        cfg = ctx.cfg
        t = cfg.times[0]
        out = []
        for n in self._orders(ctx):
            for A in ctx.observables(("q",)):
                out += _fk_specs(f"beta/A={A}/n={n}/t={t:g}", cfg, "decay", cfg.thresholds.final)
            for p in self._powers(ctx):
                out.append(_plain(f"vector/n={n}/power={p}/t={t:g}", "decay", cfg.thresholds.final))
        return out

    def point(self, ctx, m, L):
        cfg = ctx.cfg
        t = cfg.times[0]
        S = m.spectral()
        Q = spectral_projection(S, L)
        basis = m.spectral_H().eigenvectors[:, : int(ctx.opts.get("basis", 8))]
        out = {}
        for n in self._orders(ctx):
            for name in ctx.observables(("q",)):
                A = observable(m, name, cfg.seed)
                D = beta_derivative(m, Q, A, t, n) - alpha_derivative(m, A, t, n)
                out.update(_seminorm_values(f"beta/A={name}/n={n}/t={t:g}", D, S, cfg))
            for p in self._powers(ctx):
                out[f"vector/n={n}/power={p}/t={t:g}"] = flow_vector_distance(m, Q, t, n, p, basis)
        return out


class Section4(_Kind):
    """``delta_L = eta_L + Delta_L``: closure, Leibniz rule and ``||Delta_L(A)|| -> 0``."""

    name = "section4_defect"

    def _randoms(self, ctx, m):
        n = int(ctx.opts.get("n_random", 20))
        return [observable(m, "random", ctx.cfg.seed + i) for i in range(n)]

    def specs(self, ctx):
        out = [
            _plain("closure", "identity", float(ctx.opts.get("closure_tol", 1e-11))),
            _plain("leibniz/delta_L", "identity", float(ctx.opts.get("leibniz_tol", 1e-10))),
            _plain("leibniz/eta_L", "witness", ctx.cfg.thresholds.witness),
        ]
        for A in ctx.observables(("q",)):
            out += _fk_specs(f"Delta/A={A}", ctx.cfg, "decay", ctx.cfg.thresholds.final)
        return out

    def point(self, ctx, m, L):
        S = m.spectral()
        Q = spectral_projection(S, L)
        HL = cutoff_hamiltonian(m, Q)
        rs = self._randoms(ctx, m)
        closure = max(max_abs(delta_L(m, Q, A) - derivation(HL, A)) for A in rs)
        pairs = list(zip(rs[0::2], rs[1::2]))
        out = {
            "closure": closure,
            "leibniz/delta_L": max(leibniz_defect(lambda X: delta_L(m, Q, X), A, B) for A, B in pairs),
            "leibniz/eta_L": max(leibniz_defect(lambda X: eta_map(m, Q, X), A, B) for A, B in pairs),
        }
        for name in ctx.observables(("q",)):
            A = observable(m, name, ctx.cfg.seed)
            out.update(_seminorm_values(f"Delta/A={name}", delta_defect(m, Q, A), S, ctx.cfg))
        return out


class Diagnostics(_Kind):
    """Relative bound, boundedness profiles across dims and the model identities."""

    name = "diagnostics"

    def grid(self, ctx):
        lams = ctx.opts.get("lambdas")
        if lams is None:
            return [float(x) for x in np.geomspace(1.0, 1e3, 12)]
        return sorted(float(x) for x in lams)

    def _profile_dims(self, ctx):
        return [int(d) for d in ctx.opts.get("profile_dims", (16, 32, 64, 128))]

    def specs(self, ctx):
        th = ctx.cfg.thresholds
        out = [_plain("relative_bound", "nonincreasing", 1e-8)]
        for k in ctx.opts.get("cross_k", (1, 2)):
            out.append(_plain(f"cross/k={k}/ell={k}", "profile", th.profile_variation, int(k)))
        for k in range(int(ctx.opts.get("equivalence_k_max", 2)) + 1):
            out.append(_plain(f"equivalence/k={k}/left", "profile", th.profile_variation, k))
            out.append(_plain(f"equivalence/k={k}/right", "profile", th.profile_variation, k))
        if ctx.base.name == "oscillator-linear":
            out.append(_plain("completing_square", "identity", 1e-10))
        if _number_spectrum(ctx.base):
            out.append(_plain("ladder_shift", "identity", get_tolerances().cutoff_identity))
        return out

    def point(self, ctx, m, lam):
        if m.dim != ctx.base.dim:
            return {}
        return {"relative_bound": relative_bound_profile(m, [lam]).a_inf}

    def finalize(self, ctx, series, extras):
        m = ctx.base
        dims = self._profile_dims(ctx)
        by_id = {s.spec.id: s for s in series}

        def fill(sid, rows_fn):
            s = by_id[sid]
            try:
                s.points = [Point(d, None, v) for d, v in rows_fn()]
            except LabError as exc:
                fail(sid, exc)
                return
            _judge(s, ctx.cfg, m.dim)

        def fail(sid, exc):
            s = by_id[sid]
            s.points = [Point(d, None, math.nan, f"{type(exc).__name__}: {exc}") for d in dims]
            _judge(s, ctx.cfg, m.dim)

        for k in ctx.opts.get("cross_k", (1, 2)):
            fill(f"cross/k={k}/ell={k}", lambda k=k: cross_bound_profile(m, int(k), int(k), dims))
        ells = {}
        for k in range(int(ctx.opts.get("equivalence_k_max", 2)) + 1):
            try:
                prof = equivalence_profile(m, k, dims)
                ells[f"k={k}"] = {"ell": prof.ell, "bounded": prof.bounded}
                fill(f"equivalence/k={k}/left", lambda prof=prof: [(d, l) for d, l, _ in prof.rows])
                fill(f"equivalence/k={k}/right", lambda prof=prof: [(d, r) for d, _, r in prof.rows])
            except LabError as exc:
                ells[f"k={k}"] = f"{type(exc).__name__}: {exc}"
                for side in ("left", "right"):
                    fail(f"equivalence/k={k}/{side}", exc)
        extras["equivalence_ell"] = ells
        if "completing_square" in by_id:
            defects = completing_square_defects(m)
            extras["completing_square"] = defects
            fill("completing_square", lambda: [(m.dim, defects["beta=-alpha/2,c=-beta^2"])])
        if "ladder_shift" in by_id:
            fill("ladder_shift", lambda: [(m.dim, ladder_shift_defect(m))])
        if m.name == "rank-one":
            extras["B_spectrum_top"] = [float(x) for x in np.linalg.eigvalsh(m.B)[-2:]]
        return series


def _number_spectrum(m: ModelInstance) -> bool:
    return bool(m.metadata.get("fock_diagonal_H0")) and np.array_equal(
        np.real(np.diag(m.H0)), np.arange(1.0, m.dim + 1.0)
    )


KIND_TABLE: dict[str, _Kind] = {
    k.name: k
    for k in (
        Lemma22(),
        C1C2C3(),
        Corollary23(),
        Lemma59(),
        Prop60(),
        ExampleAN(),
        Lemma61(),
        Prop62(),
        Prop49(),
        Section4(),
        Diagnostics(),
    )
}


# -- verdicts --------------------------------------------------------------------


def _stability(s: Series, base_dim: int) -> float | None:
    floor = get_tolerances().floor
    ref = {p.x: p.value for p in s.points if p.dim == base_dim}
    worst = None
    for p in s.points:
        if p.dim == base_dim or p.x not in ref:
            continue
        v1, v2 = ref[p.x], p.value
        if max(abs(v1), abs(v2)) <= floor:
            delta = 0.0
        else:
            delta = abs(v2 - v1) / max(abs(v1), floor)
        worst = delta if worst is None else max(worst, delta)
    return worst


def _judge(s: Series, cfg: StudyConfig, base_dim: int) -> None:
    rule, param = s.spec.rule, s.spec.param
    floor = get_tolerances().floor
    failed = [p for p in s.points if p.reason is not None or not math.isfinite(p.value)]
    if not s.points:
        s.verdict, s.reason = "skipped", "no points"
        return
    if failed:
        s.verdict, s.reason = "skipped", failed[0].reason or "non-finite value"
        return
    base = [p for p in s.points if p.dim == base_dim] or s.points
    vals = np.array([p.value for p in base])
    s.final = float(vals[-1])
    s.reason = None
    if rule == "decay":
        xs = [p.x for p in base]
        try:
            s.fit = fit_rate(xs, vals)
        except InsufficientPoints:
            s.fit = None
        s.stability = _stability(s, base_dim)
        ok = s.final < param
        if s.stability is not None and s.stability >= cfg.thresholds.stability:
            ok = False
            s.reason = f"truncation-stability delta {s.stability:.3g} >= {cfg.thresholds.stability:g}"
        elif not ok:
            s.reason = f"final value {s.final:.3g} >= {param:g}"
    elif rule == "uniform":
        lo, hi = float(vals.min()), float(vals.max())
        spread = (0.0 if hi <= floor else math.inf) if lo <= 0 else (hi - lo) / lo
        s.extra["spread"] = spread
        ok = spread <= param
        if not ok:
            s.reason = f"spread {spread:.3g} > {param:g}"
    elif rule == "identity":
        worst = float(np.max(np.abs([p.value for p in s.points])))
        s.extra["max_abs"] = worst
        ok = worst <= param
        if not ok:
            s.reason = f"max {worst:.3g} > {param:g}"
    elif rule == "bound":
        worst = float(np.max([p.value for p in s.points]))
        s.extra["max_margin"] = worst
        ok = worst <= param
        if not ok:
            s.reason = f"lhs exceeds rhs by {worst:.3g}"
    elif rule == "witness":
        best = float(np.max(vals))
        s.extra["max"] = best
        ok = best > param
        if not ok:
            s.reason = f"max {best:.3g} <= {param:g}"
    elif rule == "profile":
        var = profile_variation([(p.dim, p.value) for p in s.points])
        s.extra["variation"] = var
        ok = var < param
        if not ok:
            s.reason = f"variation {var:.3g} >= {param:g}"
    elif rule == "nonincreasing":
        rise = float(np.max(np.diff(vals))) if vals.size > 1 else 0.0
        s.extra["max_increase"] = rise
        ok = rise <= param
        if not ok:
            s.reason = f"increases by {rise:.3g}"
    else:  # pragma: no cover - specs are internal
        raise ValueError(f"unknown rule {rule!r}")
    s.verdict = "converged" if ok else "not-converged"


# -- orchestration ---------------------------------------------------------------


def study_grid(cfg: StudyConfig) -> tuple[ModelInstance, list[float]]:
    """Base model and sweep grid of a config (also used by the oracles)."""
    kind = KIND_TABLE[cfg.kind]
    with use_tolerances(cfg.tolerances):
        base = _build(cfg, cfg.dims[0])
        return base, kind.grid(StudyContext(cfg, base))


def _build(cfg: StudyConfig, dim: int) -> ModelInstance:
    try:
        return build_model(cfg.model, dim, cfg.params)
    except LabError as exc:
        raise ConfigError(f"cannot build model: {exc}") from exc


def _evaluate(kind: _Kind, ctx: StudyContext, m: ModelInstance, x: float) -> dict[str, Any]:
    try:
        return kind.point(ctx, m, x)
    except (LabError, np.linalg.LinAlgError, ArithmeticError) as exc:
        return {"*": _Fail(f"{type(exc).__name__}: {exc}")}


def run_study(cfg: StudyConfig) -> ConvergenceReport:
    """Evaluate every series of ``cfg.kind`` over the grid and all dims, then judge them."""
    kind = KIND_TABLE[cfg.kind]
    with use_tolerances(cfg.tolerances):
        base = _build(cfg, cfg.dims[0])
        ctx = StudyContext(cfg, base)
        specs = kind.specs(ctx)
        grid = kind.grid(ctx)
        dims = list(cfg.dims)
        if cfg.stability and len(dims) == 1 and any(s.rule == "decay" for s in specs) and kind.name != "diagnostics":
            dims.append(2 * dims[0])
        models = {d: base if d == dims[0] else _build(cfg, d) for d in dims}
        tasks = [(d, x) for d in dims for x in grid]

        def job(task):
            d, x = task
            return _evaluate(kind, ctx, models[d], x)

        if cfg.workers > 1 and len(tasks) > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                futures = [pool.submit(contextvars.copy_context().run, job, t) for t in tasks]
                results = [f.result() for f in futures]
        else:
            results = [job(t) for t in tasks]

        extras: dict[str, Any] = {"f_set_note": F_SET_NOTE}
        recorded: dict[str, dict] = {}
        series = []
        for spec in specs:
            pts = []
            for (d, x), res in zip(tasks, results):
                if spec.id not in res and "*" not in res:
                    continue
                v = res.get(spec.id, res.get("*"))
                if isinstance(v, _Fail):
                    pts.append(Point(d, x, math.nan, v.reason))
                else:
                    pts.append(Point(d, x, float(v)))
            series.append(Series(spec, pts))
        for (d, x), res in zip(tasks, results):
            for key, v in res.items():
                if key.startswith("#"):
                    recorded.setdefault(key[1:], {}).setdefault(str(d), []).append([x, v])
        if recorded:
            extras["recorded"] = recorded
        for s in series:
            _judge(s, cfg, dims[0])
        series = kind.finalize(ctx, series, extras)
    return ConvergenceReport(cfg.study_id, cfg, tuple(dims), tuple(grid), series, extras)
