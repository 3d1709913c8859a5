import json
import subprocess
import sys

import pytest

from degentrace.cli import main

FAST = """\
[schedule]
h0 = 0.01
ratio = 0.5
count = 3

[oscint]
lam_min = 100
lam_max = 1000
count = 6
orders = 0 0

[flow]
times = 1
directions = 1 0
"""


def _summary(out):
    return json.loads((out / "summary.json").read_text())


def test_predict_quartic(tmp_path):
    assert main(["predict", "--preset", "quartic-1d", "--out", str(tmp_path)]) == 0
    pred = json.loads((tmp_path / "prediction.json").read_text())
    assert pred["exponent"] == pytest.approx(-0.25)
    doc = _summary(tmp_path)
    assert doc["status"] == "pass"
    for c in doc["checks"]:
        assert set(c) >= {"check_id", "status", "measured", "expected", "tolerance"}


def test_validate_rejects_harmonic(tmp_path):
    cfg = tmp_path / "h.ini"
    cfg.write_text("[potential]\ninline = n = 1 | V 2 : 1.0\n")
    assert main(["validate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert _summary(tmp_path / "o")["status"] == "fail"


def test_configuration_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[schedule]\nratio = 2\n")
    assert main(["spectrum", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_trace_is_deterministic(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(FAST)
    for d in ("a", "b"):
        assert main(["trace", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
    for name in ("trace.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_spectrum_csv(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(FAST)
    assert main(["spectrum", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert any(p.suffix == ".csv" for p in (tmp_path / "o").iterdir())


def test_flow_and_oscint(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(FAST)
    assert main(["flow", "--config", str(cfg), "--out", str(tmp_path / "f")]) == 0
    assert (tmp_path / "f" / "flow_jets.csv").exists()
    assert main(["oscint", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0


def test_report_witten(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(FAST)
    code = main(["report", "--config", str(cfg), "--preset", "witten-1d", "--criteria", "none",
                 "--out", str(tmp_path / "r")])
    doc = _summary(tmp_path / "r")
    ids = [c["check_id"] for c in doc["checks"]]
    assert any(i.startswith("validate.") for i in ids)
    assert any(i.startswith("predict.") for i in ids)
    assert any(i.startswith("flow.") for i in ids)
    assert code == (0 if doc["status"] == "pass" else 1)


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "degentrace.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
