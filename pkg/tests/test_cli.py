import csv
import json
import subprocess
import sys

import pytest

from qaspan.cli import run_command
from qaspan.report import render_table, render_report


def _run(capsys, *argv):
    code = run_command(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def workdir(tmp_path, capsys):
    out = str(tmp_path / "runs")
    for argv in (["ingest", "--format", "fixture"], ["annotate"], ["score", "--backend", "stub", "--metric", "qafe"],
                 ["score", "--metric", "qe"], ["score", "--metric", "em"]):
        code, _, err = _run(capsys, *argv, "--dataset", "fixture", "--outdir", out)
        assert code == 0, err
    return tmp_path / "runs"


def test_score_writes_verdicts(workdir):
    d = workdir / "score" / "fixture"
    lines = (d / "qafe.verdicts.jsonl").read_text().splitlines()
    assert len(lines) == 23
    manifest = json.loads((d / "manifest.json").read_text())
    assert manifest["seed"] == 0 and manifest["config_digest"] and "qafe.verdicts.jsonl" in manifest["outputs"]
    assert json.loads((d / "qafe.run.json").read_text())["provenance"]["seed"] == 0


def test_evaluate_needs_tune(workdir, capsys):
    code, _, err = _run(capsys, "evaluate", "--dataset", "fixture", "--outdir", str(workdir))
    assert code != 0
    msg = json.loads(err)
    assert msg["status"] == "error" and "tune" in msg["hint"]
    assert json.loads((workdir / "evaluate" / "fixture" / "manifest.json").read_text())["partial"] is True


def test_full_workflow_and_report(workdir, capsys):
    args = ["--dataset", "fixture", "--outdir", str(workdir)]
    for cmd in (["tune"], ["evaluate", "--resamples", "200"], ["analyze"], ["humanqg", "--synthetic-questions"],
                ["report"]):
        code, out, err = _run(capsys, *cmd, *args)
        assert code == 0, err
        assert json.loads(out)["status"] in ("ok", "partial")
    rep = workdir / "report" / "fixture"
    for name in ("roc_span.svg", "roc_summary.svg", "sweep_span.svg", "bootstrap.csv", "inherited_errors.svg"):
        assert (rep / name).exists()
    systems = {r["system"] for r in csv.DictReader(open(workdir / "evaluate" / "fixture" / "roc.csv"))}
    assert systems == {"em", "qafe", "qe"}
    first = {p.name: p.read_bytes() for p in rep.iterdir()}
    code, _, _ = _run(capsys, "report", *args)
    assert code == 0
    assert {p.name: p.read_bytes() for p in rep.iterdir()} == first
    modes = list(csv.DictReader(open(workdir / "humanqg" / "fixture" / "modes.csv")))
    assert [m["mode"] for m in modes] == ["short", "intermediate", "long", "oracle"]


def test_rerun_is_byte_identical(workdir, capsys):
    args = ["--dataset", "fixture", "--outdir", str(workdir)]
    d = workdir / "score" / "fixture"
    before = (d / "qafe.verdicts.jsonl").read_bytes()
    _run(capsys, "score", "--metric", "qafe", *args)
    assert (d / "qafe.verdicts.jsonl").read_bytes() == before
    _run(capsys, "tune", *args)
    t1 = (workdir / "tune" / "fixture" / "thresholds.json").read_bytes()
    _run(capsys, "tune", *args)
    assert (workdir / "tune" / "fixture" / "thresholds.json").read_bytes() == t1


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"outdir": str(tmp_path / "a"), "dataset": "fx", "seed": 3}))
    code, out, _ = _run(capsys, "ingest", "--format", "fixture", "--config", str(cfg))
    assert code == 0 and (tmp_path / "a" / "ingest" / "fx" / "dataset.jsonl").exists()
    code, _, _ = _run(capsys, "ingest", "--format", "fixture", "--config", str(cfg), "--outdir", str(tmp_path / "b"))
    assert code == 0 and (tmp_path / "b" / "ingest" / "fx").exists()
    manifest = json.loads((tmp_path / "b" / "ingest" / "fx" / "manifest.json").read_text())
    assert manifest["seed"] == 3
    cfg.write_text(json.dumps({"bogus": 1}))
    code, _, err = _run(capsys, "ingest", "--config", str(cfg))
    assert code != 0 and "bogus" in json.loads(err)["message"]


def test_missing_dataset_error(tmp_path, capsys):
    code, _, err = _run(capsys, "annotate", "--dataset", "nope", "--outdir", str(tmp_path))
    assert code != 0 and "ingest" in json.loads(err)["hint"]


def test_record_and_replay_cli(workdir, tmp_path, capsys):
    args = ["--dataset", "fixture", "--outdir", str(workdir)]
    cache = tmp_path / "cache.jsonl"
    _run(capsys, "score", "--metric", "qafe", "--record", str(cache), *args)
    stub_dump = (workdir / "score" / "fixture" / "qafe.verdicts.jsonl").read_bytes()
    code, _, err = _run(capsys, "score", "--metric", "qafe", "--backend", "replay", "--cache", str(cache), *args)
    assert code == 0, err
    assert (workdir / "score" / "fixture" / "qafe.verdicts.jsonl").read_bytes() == stub_dump


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "qaspan", "ingest", "--format", "fixture", "--dataset", "fx",
                           "--outdir", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["status"] == "ok"


def test_placeholder_for_empty_table(tmp_path):
    p = render_table([{"note": "empty table"}], "inherited errors", tmp_path / "t.svg")
    assert "empty table" in p.read_text()


def test_render_report_schema_check(tmp_path):
    (tmp_path / "roc.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        render_report(tmp_path, None, tmp_path / "out")
