"""Convergence studies: configs, study kinds, reports, oracles and the CLI."""

from .config import KINDS, LGridSpec, StudyConfig, Thresholds, load_config
from .report import emit_report, load_summary
from .studies import ConvergenceReport, Series, SeriesSpec, run_study

__all__ = [
    "KINDS",
    "LGridSpec",
    "StudyConfig",
    "Thresholds",
    "load_config",
    "emit_report",
    "load_summary",
    "ConvergenceReport",
    "Series",
    "SeriesSpec",
    "run_study",
]
