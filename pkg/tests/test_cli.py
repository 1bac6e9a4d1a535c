import csv
import json
import subprocess
import sys

import pytest

from gaitlab.cli import main, parse_fractions


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_parse_fractions():
    assert parse_fractions("0.1..0.3") == pytest.approx([0.1, 0.2, 0.3])
    assert parse_fractions("0.2..0.6:0.2") == pytest.approx([0.2, 0.4, 0.6])
    assert parse_fractions("0.5,1.0") == [0.5, 1.0]


def test_help_exits_zero(capsys):
    code, out, _ = run(capsys, "--help")
    assert code == 0 and "synth" in out


def test_usage_error_is_two(capsys):
    code, _, err = run(capsys, "template", "--data", "x", "--kind", "nope", "--out", "y")
    assert code == 2 and "invalid choice" in err


def test_missing_data_is_one(capsys, tmp_path):
    code, _, err = run(capsys, "template", "--data", str(tmp_path / "none"), "--out", str(tmp_path / "o"))
    assert code == 1
    assert json.loads(err)["command"] == "template"


def test_synth_tree_and_template(capsys, tmp_path):
    data = tmp_path / "data"
    code, out, _ = run(capsys, "synth", "--subjects", "2", "--seed", "1", "--out", str(data), "--frames", "30",
                       "--runs", "nm=2,bg=1,cl=1")
    assert code == 0
    seqs = [p for p in data.glob("*/*/*") if p.is_dir()]
    assert len(seqs) == 2 * 4
    assert all(len(list(p.glob("*.png"))) == 30 for p in seqs)
    assert (data / "genders.csv").exists()
    code, out, _ = run(capsys, "template", "--data", str(data), "--kind", "geni", "--out", str(tmp_path / "t"))
    assert code == 0
    assert len(list((tmp_path / "t").rglob("*.png"))) == 8


def test_auth_msm_json(capsys, tmp_path):
    code, _, _ = run(capsys, "auth", "make", "--subjects", "30", "--n-authorized", "10", "--n-type1", "40",
                     "--seed", "0", "--out", str(tmp_path))
    assert code == 0
    code, out, _ = run(capsys, "auth", "msm", "--gallery", str(tmp_path / "gallery.json"),
                       "--claims", str(tmp_path / "claims.csv"))
    assert code == 0
    row = json.loads(out)
    assert {"frr", "far_mean", "aer"} <= set(row)
    assert 0 <= row["aer"] <= 1


def test_auth_csv_format(capsys, tmp_path):
    run(capsys, "auth", "make", "--subjects", "30", "--n-authorized", "10", "--n-type1", "40", "--seed", "0",
        "--out", str(tmp_path))
    code, out, _ = run(capsys, "auth", "nn", "--format", "csv", "--gallery", str(tmp_path / "gallery.json"),
                       "--claims", str(tmp_path / "claims.csv"))
    assert code == 0
    rows = list(csv.DictReader(out.splitlines()))
    assert len(rows) == 1 and "frr" in rows[0]


def test_two_pass_needs_second_features(capsys, tmp_path):
    run(capsys, "auth", "make", "--subjects", "30", "--n-authorized", "10", "--n-type1", "40", "--seed", "0",
        "--out", str(tmp_path))
    code, _, err = run(capsys, "auth", "msm2p", "--gallery", str(tmp_path / "gallery.json"),
                       "--claims", str(tmp_path / "claims.csv"))
    assert code == 1 and "second feature set" in json.loads(err)["message"]


def test_entry_point():
    r = subprocess.run([sys.executable, "-m", "gaitlab.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "gaitlab" in r.stdout
