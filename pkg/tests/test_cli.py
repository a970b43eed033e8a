import csv
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from besovlab.cli import main
from besovlab.estimate_lab import registered
from besovlab.weighted_besov import WeightSequence

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(*argv):
    return main([str(a) for a in argv])


def test_unknown_subcommand():
    assert run("frobnicate") == 2


def test_missing_config():
    assert run("solve") == 2
    assert run("solve", "--config", "/nonexistent.ini") == 2


def test_campaign_list(capsys):
    assert run("campaign", "--list") == 0
    out = capsys.readouterr().out
    for lemma in registered():
        assert lemma in out


def test_campaign_unknown_lemma():
    assert run("campaign", "nope", "--trials", 1) == 2


def test_campaign_bony(tmp_path):
    assert run("campaign", "bony", "--grid", 128, "--trials", 50, "--out", tmp_path) == 0
    data = json.loads((tmp_path / "bony.json").read_text())
    assert data["lemma"] == "bony" and data["trials"] == 50 and data["verdict"] == "pass"
    assert data["max_ratio"] < 1e-10


def test_hypothesis_violation_exit(capsys):
    assert run("campaign", "product", "--grid", 64, "--trials", 2, "--param", "p=1") == 2
    assert "s1+s2" in capsys.readouterr().err
    assert run("compose", "--grid", 64, "--trials", 2, "--amplitude", 5) == 2


def test_bad_param_syntax():
    assert run("campaign", "product", "--trials", 1, "--param", "p") == 2


def test_weights_csv(tmp_path):
    assert run("weights", "--c", 1, "--kmax", 20, "--out", tmp_path) == 0
    w = WeightSequence(c=1.0, j_min=0, j_max=20)
    with open(tmp_path / "weights.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 21 * 6
    for row in rows:
        assert float(row["omega"]) == w.omega(int(row["k"]), float(row["t"]))


def test_partition_check(tmp_path):
    assert run("partition-check", "--grid", 64, "--trials", 3, "--out", tmp_path) == 0
    data = json.loads((tmp_path / "partition.json").read_text())
    assert data["partition_sum_error"] <= 1e-10 and data["reconstruction_error"] <= 1e-10


def test_bernstein(tmp_path):
    assert run("bernstein", "--grid", 64, "--trials", 4, "--p", 2, "--q", "inf", "--out", tmp_path) == 0
    assert json.loads((tmp_path / "bernstein.json").read_text())["params"]["q"] == "inf"


def test_momentum_fit(tmp_path):
    assert run("momentum", "--grid", 32, "--out", tmp_path) == 0
    data = json.loads((tmp_path / "mode_decay.json").read_text())
    assert data["spread"] <= 0.1


def test_solve_deterministic(tmp_path):
    cfg = CONFIGS / "polynomial.ini"
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("solve", "--config", cfg, "--out", a, "--no-timestamp") == 0
    assert run("solve", "--config", cfg, "--out", b, "--no-timestamp") == 0
    names = sorted(os.listdir(a))
    assert {"manifest.json", "norms_a.csv", "norms_u.csv", "hypothesis_trace.csv",
            "a_final.bin", "u_final.bin"} <= set(names)
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["first_breach"] is None and "created" not in manifest


def test_solve_timestamp(tmp_path):
    assert run("solve", "--config", CONFIGS / "polynomial.ini", "--out", tmp_path) == 0
    assert "created" in json.loads((tmp_path / "manifest.json").read_text())


def test_json_stdout(capsys):
    assert run("campaign", "product-linf", "--grid", 64, "--trials", 2, "--json") == 0
    data = json.loads(capsys.readouterr().out)
    assert data["lemma"] == "product-linf"


def test_module_entry():
    proc = subprocess.run([sys.executable, "-m", "besovlab", "campaign", "--list"], capture_output=True, text=True)
    assert proc.returncode == 0 and "bony" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "besovlab", "nothing"], capture_output=True, text=True)
    assert proc.returncode == 2


@pytest.mark.slow
def test_uniqueness(tmp_path):
    cfg = CONFIGS / "polynomial.ini"
    assert run("uniqueness", "--config", cfg, "--out", tmp_path) == 0
    data = json.loads((tmp_path / "uniqueness.json").read_text())
    assert data["verdict"] == "pass"
