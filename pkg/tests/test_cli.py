import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from hidacalc import chaos as C
from hidacalc.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, EXIT_PRECONDITION, ConfigError, main, parse_config
from hidacalc.config import TruncationPolicy

ROOT = Path(__file__).resolve().parents[1]
BASE = """
[truncation]
K = 4
N_max = 4
headroom = {headroom}

[grid]
T = 1.0
n = 8

[kernel]
family = fbm-liouville
H = 0.75

[run]
suites = algebra gelfand
seed = 7
trials = 4
samples = 2000
"""


def write(tmp_path, text, name="exp.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_verify_deterministic_and_hashed(tmp_path):
    cfg = write(tmp_path, BASE.format(headroom=2))
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "b")]) == EXIT_OK
    a, b = (tmp_path / "a" / "verify.csv").read_bytes(), (tmp_path / "b" / "verify.csv").read_bytes()
    assert a == b
    rows = list(csv.DictReader(a.decode().splitlines()))
    assert rows and len({r["config_hash"] for r in rows}) == 1
    summary = json.loads((tmp_path / "a" / "verify_summary.json").read_text())
    assert summary["schema_version"] == "1.0" and summary["config_hash"] == rows[0]["config_hash"]
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "8"]) == EXIT_OK
    other = list(csv.DictReader((tmp_path / "c" / "verify.csv").read_text().splitlines()))
    assert other[0]["config_hash"] != rows[0]["config_hash"]


def test_suite_flag_and_json(tmp_path):
    cfg = write(tmp_path, BASE.format(headroom=2))
    assert main(["verify", "--config", cfg, "--out", str(tmp_path), "--suite", "fubini", "--suite", "ibp",
                 "--format", "json"]) == EXIT_OK
    data = json.loads((tmp_path / "verify.json").read_text())
    assert {r["suite"] for r in data["rows"]} == {"fubini", "ibp"}


def test_precondition_exit_code(tmp_path):
    cfg = write(tmp_path, BASE.format(headroom=0))
    assert main(["verify", "--config", cfg, "--out", str(tmp_path), "--suite", "ibp"]) == EXIT_PRECONDITION
    assert EXIT_PRECONDITION not in (EXIT_FAIL, EXIT_CONFIG)


def test_config_errors_carry_lines(tmp_path, capsys):
    bad = BASE.format(headroom=2).replace("n = 8", "n = eight")
    with pytest.raises(ConfigError) as exc:
        parse_config(bad)
    assert exc.value.line == bad.splitlines().index("n = eight") + 1
    assert main(["verify", "--config", write(tmp_path, bad)]) == EXIT_CONFIG
    assert "line" in capsys.readouterr().err
    with pytest.raises(ConfigError, match="unknown suite"):
        parse_config(BASE.format(headroom=2).replace("algebra gelfand", "algebra nonsense"))
    with pytest.raises(ConfigError, match="kernel"):
        parse_config(BASE.format(headroom=2).replace("H = 0.75", "H = 2"))
    noseed = BASE.format(headroom=2).replace("seed = 7", "")
    assert main(["verify", "--config", write(tmp_path, noseed, "n.ini")]) == EXIT_CONFIG


def test_assertion_failure_exit_code(tmp_path, monkeypatch):
    from hidacalc import suites
    from hidacalc.suites import Check
    monkeypatch.setitem(suites.SUITES, "algebra", lambda ctx: [Check("algebra", "broken", False, 1.0, 0.0)])
    cfg = write(tmp_path, BASE.format(headroom=2).replace("algebra gelfand", "algebra"))
    assert main(["verify", "--config", cfg, "--out", str(tmp_path)]) == EXIT_FAIL


def test_converge_and_volterra(tmp_path):
    cfg = write(tmp_path, BASE.format(headroom=2))
    assert main(["converge", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "converge.csv").read_text().splitlines()))
    studies = {r["study"] for r in rows}
    assert {"shrink_unit", "shrink_deterministic", "shrink_constant", "vitali", "dominated",
            "trapezoid_halving"} <= studies
    flat = [r for r in rows if r["study"] == "shrink_constant"]
    assert all(r["flagged"] == "true" for r in flat)
    orders = [float(r["fitted_rate"]) for r in rows if r["study"] == "trapezoid_halving" and r["fitted_rate"]]
    assert all(abs(o - 2) <= 0.1 for o in orders)
    assert main(["volterra", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    summ = json.loads((tmp_path / "volterra_summary.json").read_text())
    assert summ["identity_kernel_residual"] <= 1e-12 and summ["gap_minus_trace"] <= 1e-12


def test_pair(tmp_path, capsys):
    P = TruncationPolicy()
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    a.write_text(C.dumps(C.basis_vector({0: 2}, P, 3.0) + C.unit(P)))
    b.write_text(C.dumps(C.basis_vector({0: 2}, P, 1.0)))
    assert main(["pair", str(a), str(b)]) == EXIT_OK
    assert float(capsys.readouterr().out) == 6.0
    b.write_text("0^q : 1\n")
    assert main(["pair", str(a), str(b)]) == EXIT_CONFIG


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "hidacalc", "verify", "--config", str(ROOT / "configs" / "default.ini"),
                          "--out", str(tmp_path), "--suite", "stochastic"], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert "PASS" in out.stdout
