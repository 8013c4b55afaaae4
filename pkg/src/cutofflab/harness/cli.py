"""Command line entry point.

::

    cutofflab models list
    cutofflab study run --config study.yaml
    cutofflab study run --kind lemma2_2 --model commuting --dim 64
    cutofflab oracle tail --dim 64 --L 10.5 --ell 3
    cutofflab oracle seminorm-diag --diag 1,0.5,0.25 --f gaussian --k 2
    cutofflab oracle m5 --kind lemma59 --dim 32

Exit codes: 0 when every series converged or was skipped, 2 when any series
did not converge, 1 on usage, configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

import numpy as np

from .. import __version__
from ..cutoff import tail_norm
from ..errors import LabError
from ..linop import hermitian_eig
from ..models import build_model, list_models
from ..seminorms import parse_test_function, quasi_uniform_seminorm
from .config import KINDS, LGridSpec, StudyConfig, default_out_dir, load_config
from .oracles import ORACLE_MODEL, compare_with_oracle, diag_seminorm_oracle, tail_oracle
from .report import emit_report
from .studies import run_study

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1 rather than argparse's 2, which is reserved for verdicts."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _param(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cutofflab", description="Spectral cutoff convergence studies.")
    p.add_argument("--version", action="version", version=f"cutofflab {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    models = sub.add_parser("models", help="model catalog")
    msub = models.add_subparsers(dest="action", required=True, parser_class=_Parser)
    msub.add_parser("list", help="print the catalog as JSON")

    study = sub.add_parser("study", help="run convergence studies")
    ssub = study.add_subparsers(dest="action", required=True, parser_class=_Parser)
    run = ssub.add_parser("run", help="run one study and write its report")
    run.add_argument("--config", help="YAML study config")
    run.add_argument("--kind", choices=KINDS)
    run.add_argument("--model")
    run.add_argument("--dim", type=int, action="append", help="truncation dimension (repeatable)")
    run.add_argument("--param", type=_param, action="append", default=[], metavar="KEY=VALUE")
    run.add_argument("--L-count", type=int, dest="L_count")
    run.add_argument("--k-max", type=int, dest="k_max")
    run.add_argument("--out", help="output directory (default: $CUTOFFLAB_OUT or ./cutofflab-out)")
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--no-stability", action="store_true", help="skip the doubled-dimension run")
    run.add_argument("--allow-upper", action="store_true", help="accept explicit cutoffs above the lower half")
    run.add_argument("--quiet", action="store_true")

    oracle = sub.add_parser("oracle", help="closed-form oracles for spot checks")
    osub = oracle.add_subparsers(dest="action", required=True, parser_class=_Parser)
    t = osub.add_parser("tail", help="tail norm of H0 = diag(1..dim) against the spectrum maximum")
    t.add_argument("--dim", type=int, required=True)
    t.add_argument("--L", type=float, required=True)
    t.add_argument("--ell", type=int, required=True)
    d = osub.add_parser("seminorm-diag", help="seminorm of a diagonal matrix against diag(1..n)")
    d.add_argument("--diag", required=True, help="comma-separated diagonal entries")
    d.add_argument("--f", default="exponential", help="test function, e.g. gaussian or polyexp:2:1")
    d.add_argument("--k", type=int, default=0)
    m5 = osub.add_parser("m5", help="run a study on the commuting model and compare with its oracle")
    m5.add_argument("--kind", choices=KINDS, required=True)
    m5.add_argument("--dim", type=int, default=32)
    m5.add_argument("--param", type=_param, action="append", default=[], metavar="KEY=VALUE")
    m5.add_argument("--k-max", type=int, dest="k_max")
    return p


def _coerce(v: str):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


def _config_from_args(a: argparse.Namespace) -> StudyConfig:
    if a.config:
        if a.kind or a.model or a.dim:
            raise LabError("--config cannot be combined with --kind/--model/--dim")
        cfg = load_config(a.config)
    else:
        if not (a.kind and a.model and a.dim):
            raise LabError("study run needs --config or all of --kind, --model and --dim")
        cfg = StudyConfig(
            kind=a.kind,
            model=a.model,
            params={k: _coerce(v) for k, v in a.param},
            dims=tuple(sorted(set(a.dim))),
        )
    changes: dict = {}
    if a.L_count is not None or a.allow_upper:
        changes["L_grid"] = LGridSpec(
            count=a.L_count if a.L_count is not None else cfg.L_grid.count,
            placement=cfg.L_grid.placement,
            window=cfg.L_grid.window,
            values=cfg.L_grid.values,
            allow_upper=a.allow_upper or cfg.L_grid.allow_upper,
        )
    if a.k_max is not None:
        changes["k_max"] = a.k_max
    if a.seed is not None:
        changes["seed"] = a.seed
    if a.workers is not None:
        changes["workers"] = a.workers
    if a.no_stability:
        changes["stability"] = False
    return cfg.replace(**changes) if changes else cfg


def _study_run(a: argparse.Namespace) -> int:
    cfg = _config_from_args(a)
    report = run_study(cfg)
    out = a.out or cfg.out or default_out_dir()
    emit_report(report, out)
    if not a.quiet:
        for s in report.series:
            why = f"  ({s.reason})" if s.reason else ""
            print(f"{s.verdict:14s} {s.spec.id}{why}")
        c = report.counts()
        print(
            f"{report.study_id}: {c['converged']} converged, {c['not-converged']} not-converged, "
            f"{c['skipped']} skipped -> {out}/{report.study_id}"
        )
    return report.exit_code


def _oracle(a: argparse.Namespace) -> int:
    if a.action == "tail":
        m = build_model(ORACLE_MODEL, a.dim)
        S = m.spectral()
        got = tail_norm(S, a.L, a.ell)
        want = tail_oracle(np.diag(m.H0).real, a.L, a.ell)
        res = {"tail_norm": got, "oracle": want, "bound": a.L ** (-a.ell), "agree": bool(abs(got - want) <= 1e-12)}
    elif a.action == "seminorm-diag":
        vals = np.array([float(x) for x in a.diag.split(",")])
        lam = np.arange(1.0, vals.size + 1.0)
        f = parse_test_function(a.f)
        got = quasi_uniform_seminorm(np.diag(vals), hermitian_eig(np.diag(lam)), f, a.k).value
        want = diag_seminorm_oracle(lam, vals, f, a.k)
        res = {"seminorm": got, "oracle": want, "agree": bool(abs(got - want) <= 1e-9 * max(1.0, abs(want)))}
    else:
        changes = {"k_max": a.k_max} if a.k_max is not None else {}
        cfg = StudyConfig(
            kind=a.kind, model=ORACLE_MODEL, params={k: _coerce(v) for k, v in a.param}, dims=(a.dim,), **changes
        )
        cmp = compare_with_oracle(run_study(cfg))
        res = {
            "compared": cmp.compared,
            "max_discrepancy": cmp.max_discrepancy,
            "worst": cmp.worst,
            "missing": cmp.missing,
            "agree": cmp.agrees(),
        }
    print(json.dumps(res, indent=2, sort_keys=True))
    return EXIT_OK if res["agree"] else EXIT_NOT_CONVERGED


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if a.command == "models":
            print(json.dumps(list_models(), indent=2, sort_keys=True))
            return EXIT_OK
        if a.command == "study":
            return _study_run(a)
        return _oracle(a)
    except (LabError, ValueError) as exc:
        print(f"cutofflab: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
