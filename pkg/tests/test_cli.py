import csv
import json
import subprocess
import sys

import pytest

from cnipriv import divergence
from cnipriv.cli import main, read_config_file


@pytest.fixture(autouse=True)
def ignore_small_trial_warnings(recwarn):
    yield


def test_account_prints_tables(capsys):
    assert main(["account", "--n", "100", "--order", "2"]) == 0
    out = capsys.readouterr().out
    assert "per-index" in out and "random stop" in out and "multi-epoch" in out
    assert len([l for l in out.splitlines() if l.strip().split(" ")[0].isdigit()]) == 5


def test_run_to_stdout(capsys):
    code = main(["run", "per-person", "--n", "128", "--d", "2", "--trials", "4"])
    assert code == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert rows[0]["experiment"] == "per-person" and rows[0]["n"] == "128"


def test_config_file_overrides_flags(tmp_path, monkeypatch):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("# desk run\ntask = linear\nn = 64   # small\ntrials = 4\n"
                   "output-path = res.csv\n")
    monkeypatch.setenv("CNIPRIV_OUTPUT_DIR", str(tmp_path / "outdir"))
    assert main(["run", "baseline", "--n", "4096", "--config", str(cfg)]) == 0
    rows = list(csv.DictReader((tmp_path / "outdir" / "res.csv").open()))
    assert rows[0]["task"] == "linear" and rows[0]["n"] == "64"


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    with pytest.raises(ValueError, match="unknown key"):
        read_config_file(bad)
    bad.write_text("n 5\n")
    with pytest.raises(ValueError, match="key = value"):
        read_config_file(bad)


def test_invalid_configuration_exit_code(capsys):
    assert main(["run", "public-private", "--n", "64", "--trials", "4"]) == 2
    assert "m_public" in capsys.readouterr().err


def test_smoothing_defaults_to_nonsmooth_task(capsys):
    assert main(["run", "smoothing", "--n", "64", "--d", "2", "--trials", "4"]) == 0
    assert "hinge-smoothed" in capsys.readouterr().out


def test_verify_rows_match_suite_size(tmp_path):
    out = tmp_path / "v.jsonl"
    assert main(["verify", "--output", str(out), "--pai-count", "8"]) == 0
    rows = [json.loads(l) for l in out.read_text().splitlines()]
    sizes = {"gaussian": 36, "pai": 8, "shift-reduction": 50, "data-processing": 30,
             "per-index": 64}
    for suite, size in sizes.items():
        assert sum(r["suite"] == suite for r in rows) == size
    assert len(rows) == sum(sizes.values())


def test_verify_catches_wrong_gaussian_constant(tmp_path, monkeypatch):
    monkeypatch.setattr(divergence, "_GAUSSIAN_DENOM", 4.0)
    code = main(["verify", "--output", str(tmp_path / "v.jsonl"), "--pai-count", "8",
                 "--suite", "gaussian", "--suite", "pai"])
    assert code != 0


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "cnipriv", "account", "--n", "10"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "local rdp" in res.stdout
