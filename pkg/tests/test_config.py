import pytest

from cutofflab.errors import ConfigError
from cutofflab.harness.config import KINDS, LGridSpec, StudyConfig, default_out_dir, load_config
from cutofflab.seminorms import DEFAULT_F_SET, TestFunction


def test_defaults():
    cfg = StudyConfig(kind="lemma2_2", model="commuting")
    assert cfg.dims == (64,)
    assert cfg.f_set == DEFAULT_F_SET
    assert cfg.k_max == 4
    assert cfg.thresholds.final == 1e-3
    assert cfg.thresholds.stability == 0.01
    assert cfg.study_id == "lemma2_2-commuting-d64"
    assert len(KINDS) == 11


@pytest.mark.parametrize(
    "kw",
    [
        {"kind": "lemma9"},
        {"model": "harmonic"},
        {"dims": (64, 32)},
        {"dims": (2,)},
        {"dims": ()},
        {"f_set": ()},
        {"k_max": -1},
        {"times": (2.0, 1.0)},
        {"workers": 0},
        {"L_grid": LGridSpec(placement="random")},
        {"L_grid": LGridSpec(count=0)},
        {"tolerances": {"nonsense": 1.0}},
    ],
)
def test_invalid_configs(kw):
    base = {"kind": "lemma2_2", "model": "commuting"}
    with pytest.raises(ConfigError):
        StudyConfig(**{**base, **kw})


def test_load_yaml(tmp_path):
    path = tmp_path / "study.yaml"
    path.write_text(
        """
kind: prop49
model:
  name: oscillator-linear
  params: {alpha: 0.5}
dims: [32, 64]
L_grid: {count: 6, placement: log}
f_set: [gaussian, "polyexp:1:0.5", {kind: exponential, alpha: 2}]
k_max: 2
times: [1.0]
observables: [q, p]
thresholds: {final: 1.0e-4}
tolerances: {quad_agree: 1.0e-10}
options: {basis: 4}
seed: 7
workers: 2
output: {dir: out}
"""
    )
    cfg = load_config(path)
    assert cfg.kind == "prop49" and cfg.model == "oscillator-linear"
    assert cfg.params == {"alpha": 0.5}
    assert cfg.dims == (32, 64)
    assert cfg.L_grid == LGridSpec(count=6, placement="log")
    assert cfg.f_set == (TestFunction("gaussian"), TestFunction("polyexp", 0.5, 1), TestFunction("exponential", 2.0))
    assert cfg.observables == ("q", "p")
    assert cfg.thresholds.final == 1e-4
    assert cfg.tolerances == {"quad_agree": 1e-10}
    assert cfg.seed == 7 and cfg.workers == 2 and cfg.out == "out"
    echo = cfg.to_dict()
    assert echo["model"] == {"name": "oscillator-linear", "params": {"alpha": 0.5}}
    assert echo["f_set"][1] == "polyexp[m=1;alpha=0.5]"


def test_single_dim_shorthand(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text("kind: lemma59\nmodel: commuting\ndim: 16\n")
    assert load_config(path).dims == (16,)


@pytest.mark.parametrize(
    "text",
    [
        "kind: lemma59\nmodel: commuting\ncolour: red\n",
        "kind: lemma59\n",
        "kind: lemma59\nmodel: commuting\nL_grid: {spacing: 2}\n",
        "kind: lemma59\nmodel: commuting\nthresholds: {strict: 1}\n",
        "kind: lemma59\nmodel: commuting\nf_set: [lorentzian]\n",
        "kind: lemma59\nmodel: commuting\ndims: [a]\n",
        "- just\n- a list\n",
        "kind: [unclosed\n",
    ],
)
def test_bad_files(tmp_path, text):
    path = tmp_path / "bad.yaml"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")


def test_out_dir_env(monkeypatch):
    monkeypatch.delenv("CUTOFFLAB_OUT", raising=False)
    assert default_out_dir() == "cutofflab-out"
    monkeypatch.setenv("CUTOFFLAB_OUT", "/tmp/elsewhere")
    assert default_out_dir() == "/tmp/elsewhere"
