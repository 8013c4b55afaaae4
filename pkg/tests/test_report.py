import csv
import filecmp
import json
import sys
from pathlib import Path

import pytest

from cutofflab.errors import IoError
from cutofflab.harness import StudyConfig, emit_report, load_summary, run_study
from cutofflab.harness.report import CSV_COLUMNS, SCHEMA_VERSION
from cutofflab.harness.studies import ConvergenceReport

FIXTURES = Path(__file__).parent / "fixtures"
sys.path.insert(0, str(FIXTURES))
from make_golden import GOLDEN_CONFIG  # noqa: E402


def tree(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def small_report():
    return run_study(StudyConfig(kind="lemma2_2", model="oscillator-linear", dims=(16,), k_max=1))


def test_empty_study(tmp_path):
    cfg = StudyConfig(kind="lemma59", model="commuting", dims=(16,))
    r = ConvergenceReport("empty", cfg, (16,), (), [])
    emit_report(r, tmp_path)
    assert (tmp_path / "empty" / "series.csv").read_text() == ",".join(CSV_COLUMNS) + "\n"
    summary = load_summary(tmp_path / "empty" / "summary.json")
    assert summary["series"] == []
    assert summary["counts"] == {"converged": 0, "not-converged": 0, "skipped": 0}
    assert summary["exit_code"] == 0


def test_layout_and_columns(tmp_path, small_report):
    emit_report(small_report, tmp_path)
    root = tmp_path / small_report.study_id
    per_series = sorted((root / "series").glob("*.csv"))
    assert len(per_series) == len(small_report.series)
    with open(root / "series.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) - 1 == sum(len(s.points) for s in small_report.series)
    assert {r[2] for r in rows[1:]} == {"16", "32"}


def test_round_trip(tmp_path, small_report):
    emit_report(small_report, tmp_path)
    summary = load_summary(tmp_path / small_report.study_id / "summary.json")
    assert summary["schema"] == SCHEMA_VERSION
    assert summary["tool"] == "cutofflab"
    assert summary["seed"] == small_report.config.seed
    assert summary["config"] == json.loads(json.dumps(small_report.config.to_dict()))
    got = {s["id"]: (s["verdict"], s["reason"]) for s in summary["series"]}
    assert got == {s.spec.id: (s.verdict, s.reason) for s in small_report.series}
    for s in summary["series"]:
        assert (tmp_path / small_report.study_id / s["csv"]).exists()


def test_byte_stable(tmp_path, small_report):
    emit_report(small_report, tmp_path / "a")
    emit_report(run_study(small_report.config), tmp_path / "b")
    assert tree(tmp_path / "a") == tree(tmp_path / "b")


def test_formats(tmp_path, small_report):
    written = emit_report(small_report, tmp_path, formats=("json",))
    assert [p.name for p in written] == ["summary.json"]
    with pytest.raises(ValueError):
        emit_report(small_report, tmp_path, formats=("xml",))


def test_unwritable_target(tmp_path, small_report):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(IoError):
        emit_report(small_report, blocker)


def test_nan_written_as_null(tmp_path):
    r = run_study(StudyConfig(kind="lemma61", model="number-aN", dims=(16,), k_max=0))
    emit_report(r, tmp_path)
    text = (tmp_path / r.study_id / "summary.json").read_text()
    assert "NaN" not in text
    rows = list(csv.reader(open(tmp_path / r.study_id / "series.csv")))
    assert all(row[-1] == "nan" for row in rows[1:])


def test_golden_fixture(tmp_path):
    emit_report(run_study(GOLDEN_CONFIG), tmp_path)
    golden = FIXTURES / "golden"
    assert tree(tmp_path) == tree(golden)
    assert not filecmp.dircmp(tmp_path, golden).diff_files
