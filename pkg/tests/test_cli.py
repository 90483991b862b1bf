import io
import json
import subprocess
import sys

import pytest

from memreset.cli import main
from memreset.report import verify_manifest


@pytest.fixture
def log(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    path = tmp_path / "logs.csv"
    assert main(["generate", "--preset", "small", "--seed", "3", "--irregular-rate", "0.05",
                 "--out", str(path), "--truth", str(tmp_path / "truth.jsonl")]) == 0
    return path


def test_generate_then_all(log, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["all", str(log), "--out-dir", str(out), "--policy", "window:k=2"]) == 0
    assert "| 30 min |" in capsys.readouterr().out
    for name in ("records.csv", "validation.json", "threads.jsonl", "reconstruction.json",
                 "results.json", "results.csv", "impact.json", "token_distribution.csv",
                 "pause_histogram.csv", "summary.md"):
        assert (out / name).exists(), name
    assert verify_manifest(out / "all.manifest.json") == []
    assert verify_manifest(tmp_path / "generate.manifest.json") == []
    impact = json.loads((out / "impact.json").read_text())
    assert impact["policies"][0]["policy"] == "window:k=2"
    rec = json.loads((out / "reconstruction.json").read_text())
    truth = [json.loads(x) for x in (tmp_path / "truth.jsonl").read_text().splitlines()]
    assert rec["threads_dropped_irregular"] == len({r["thread"] for r in truth if r["irregular"]})


def test_stage_by_stage(log, tmp_path, capsys):
    out = str(tmp_path / "s")
    assert main(["ingest", str(log), "--out-dir", out]) == 0
    assert main(["reconstruct", str(log), "--out-dir", out]) == 0
    assert main(["simulate", f"{out}/threads.jsonl", "--thresholds", "inf,30m", "--out-dir", out]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[1].startswith("inf,") and lines[1].split(",")[3] == "0.0"
    assert main(["impact", "--results", f"{out}/results.json", "--out-dir", out]) == 0
    assert main(["report", "--threads", f"{out}/threads.jsonl", "--results", f"{out}/results.json",
                 "--impact", f"{out}/impact.json", "--out-dir", out]) == 0
    for stage in ("ingest", "reconstruct", "simulate", "impact", "report"):
        assert verify_manifest(tmp_path / "s" / f"{stage}.manifest.json") == []


def test_jobs_do_not_change_outputs(log, tmp_path):
    for jobs in ("1", "8"):
        assert main(["all", str(log), "--out-dir", str(tmp_path / jobs), "--jobs", jobs]) == 0
    for f in sorted((tmp_path / "1").iterdir()):
        assert f.read_bytes() == (tmp_path / "8" / f.name).read_bytes(), f.name


def test_impact_from_stdin(tmp_path, monkeypatch, capsys):
    results = [{"threshold_seconds": 1800, "total_prompt_tokens_before": 2000,
                "total_prompt_tokens_after": 1000, "threads_affected": 1, "resets_applied": 1}]
    monkeypatch.setattr(sys, "stdin", io.TextIOWrapper(io.BytesIO(json.dumps(results).encode())))
    pricing = tmp_path / "p.json"
    pricing.write_text('{"currency": "USD", "models": {"m": {"price_per_1k_prompt_tokens": "0.5"}}}')
    assert main(["impact", "--results", "-", "--pricing", str(pricing), "--out-dir", str(tmp_path)]) == 0
    table = json.loads(capsys.readouterr().out)
    assert table["per_threshold"][0]["cost_saved"] == "0.5000"


def test_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert main(["all", str(bad), "--out-dir", str(tmp_path / "o")]) == 1
    assert not (tmp_path / "o" / "records.csv").exists()
    assert "error" in capsys.readouterr().err


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "memreset.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "memreset" in proc.stdout
