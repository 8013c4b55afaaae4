"""Study configuration: a YAML tree validated into a frozen :class:`StudyConfig`."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from ..config import Tolerances
from ..errors import ConfigError, LabError
from ..models import CATALOG, ENGINEERED
from ..seminorms import DEFAULT_F_SET, DEFAULT_K_MAX, TestFunction, parse_test_function

__all__ = ["KINDS", "LGridSpec", "Thresholds", "StudyConfig", "load_config", "default_out_dir"]

KINDS = (
    "lemma2_2",
    "c1c2c3",
    "corollary2_3",
    "lemma59",
    "prop60",
    "example_aN",
    "lemma61",
    "prop62",
    "prop49",
    "section4_defect",
    "diagnostics",
)

OUT_ENV = "CUTOFFLAB_OUT"


def default_out_dir() -> str:
    return os.environ.get(OUT_ENV, "cutofflab-out")


@dataclass(frozen=True)
class LGridSpec:
    """Eigenvalue-midpoint grid (``placement`` + ``count``) or explicit ``values``."""

    count: int = 12
    placement: str = "window"
    window: tuple[float, float] = (0.125, 0.5)
    values: tuple[float, ...] | None = None
    # explicit values above lambda_{ceil(d/2)} are refused unless this is set
    allow_upper: bool = False


@dataclass(frozen=True)
class Thresholds:
    final: float = 1e-3
    stability: float = 0.01
    uniform_spread: float = 0.2
    bound_slack: float = 1e-8
    witness: float = 1e-3
    profile_variation: float = 0.1


@dataclass(frozen=True)
class StudyConfig:
    kind: str
    model: str
    params: Mapping[str, Any] = field(default_factory=dict)
    dims: tuple[int, ...] = (64,)
    stability: bool = True
    L_grid: LGridSpec = LGridSpec()
    f_set: tuple[TestFunction, ...] = DEFAULT_F_SET
    k_max: int = DEFAULT_K_MAX
    times: tuple[float, ...] = (1.0,)
    observables: tuple[str, ...] | None = None
    thresholds: Thresholds = Thresholds()
    tolerances: Mapping[str, Any] = field(default_factory=dict)
    options: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0
    workers: int = 1
    out: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown study kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.model not in CATALOG and self.model not in ENGINEERED:
            raise ConfigError(f"unknown model {self.model!r}")
        if not self.dims or any(int(d) < 4 for d in self.dims):
            raise ConfigError("dims must be a nonempty list of integers >= 4")
        if list(self.dims) != sorted(set(self.dims)):
            raise ConfigError("dims must be strictly ascending")
        if not self.f_set:
            raise ConfigError("f_set must not be empty")
        if self.k_max < 0:
            raise ConfigError("k_max must be >= 0")
        if not self.times or any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ConfigError("times must be a nonempty ascending list")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.L_grid.placement not in ("window", "lower-half", "log"):
            raise ConfigError(f"unknown L placement {self.L_grid.placement!r}")
        if self.L_grid.count < 1:
            raise ConfigError("L_grid.count must be >= 1")
        unknown = set(self.tolerances) - {f.name for f in dataclasses.fields(Tolerances)}
        if unknown:
            raise ConfigError(f"unknown tolerance fields {sorted(unknown)}")

    @property
    def study_id(self) -> str:
        return f"{self.kind}-{self.model}-d{self.dims[0]}"

    def replace(self, **changes: Any) -> "StudyConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        """Plain-data echo used in report summaries."""
        return {
            "kind": self.kind,
            "model": {"name": self.model, "params": dict(self.params)},
            "dims": list(self.dims),
            "stability": self.stability,
            "L_grid": {
                "count": self.L_grid.count,
                "placement": self.L_grid.placement,
                "window": list(self.L_grid.window),
                "values": None if self.L_grid.values is None else list(self.L_grid.values),
                "allow_upper": self.L_grid.allow_upper,
            },
            "f_set": [f.label for f in self.f_set],
            "k_max": self.k_max,
            "times": list(self.times),
            "observables": None if self.observables is None else list(self.observables),
            "thresholds": dataclasses.asdict(self.thresholds),
            "tolerances": dict(self.tolerances),
            "options": dict(self.options),
            "seed": self.seed,
            "workers": self.workers,
        }

    @classmethod
    def from_mapping(cls, raw: Mapping[str, Any]) -> "StudyConfig":
        if not isinstance(raw, Mapping):
            raise ConfigError("config must be a mapping at the top level")
        known = {
            "kind", "model", "dims", "dim", "stability", "L_grid", "f_set", "k_max", "times",
            "observables", "thresholds", "tolerances", "options", "seed", "workers", "output",
        }
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            model = raw.get("model")
            if isinstance(model, Mapping):
                name, params = model.get("name"), dict(model.get("params") or {})
            else:
                name, params = model, {}
            if not name:
                raise ConfigError("config needs a model name")
            if "dims" in raw:
                dims = tuple(int(d) for d in raw["dims"])
            elif "dim" in raw:
                dims = (int(raw["dim"]),)
            else:
                dims = (64,)
            lg = dict(raw.get("L_grid") or {})
            bad = set(lg) - {f.name for f in dataclasses.fields(LGridSpec)}
            if bad:
                raise ConfigError(f"unknown L_grid keys {sorted(bad)}")
            if "window" in lg:
                lg["window"] = tuple(float(x) for x in lg["window"])
            if lg.get("values") is not None:
                lg["values"] = tuple(float(x) for x in lg["values"])
            th = dict(raw.get("thresholds") or {})
            bad = set(th) - {f.name for f in dataclasses.fields(Thresholds)}
            if bad:
                raise ConfigError(f"unknown threshold keys {sorted(bad)}")
            f_set = raw.get("f_set")
            out = raw.get("output") or {}
            obs = raw.get("observables")
            return cls(
                kind=str(raw.get("kind")),
                model=str(name),
                params=params,
                dims=dims,
                stability=bool(raw.get("stability", True)),
                L_grid=LGridSpec(**lg),
                f_set=DEFAULT_F_SET if f_set is None else tuple(parse_test_function(f) for f in f_set),
                k_max=int(raw.get("k_max", DEFAULT_K_MAX)),
                times=tuple(float(t) for t in raw.get("times", (1.0,))),
                observables=None if obs is None else tuple(str(o) for o in obs),
                thresholds=Thresholds(**{k: float(v) for k, v in th.items()}),
                tolerances=dict(raw.get("tolerances") or {}),
                options=dict(raw.get("options") or {}),
                seed=int(raw.get("seed", 0)),
                workers=int(raw.get("workers", 1)),
                out=out.get("dir") if isinstance(out, Mapping) else None,
            )
        except ConfigError:
            raise
        except (LabError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc


def load_config(path: str | Path) -> StudyConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return StudyConfig.from_mapping(raw or {})
