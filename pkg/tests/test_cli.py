import hashlib
import json
import subprocess
import sys

import pytest

from topnfair.cli import main

SMALL = ["--users", "80", "--services", "10", "--capacity-min", "22", "--capacity-max", "38", "--trace-rounds", "12"]


def _digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def data(tmp_path):
    out = tmp_path / "data"
    assert main(["generate", "--regime", "popular", "--seed", "3", "--out", str(out)] + SMALL) == 0
    return out


def test_generate_writes_files(data):
    for name in ("ratings.csv", "services.csv", "participation.csv", "manifest.json"):
        assert (data / name).exists()
    manifest = json.loads((data / "manifest.json").read_text())
    assert manifest["command"] == "generate"
    assert manifest["config"]["topn"] == 5


def test_generate_is_byte_identical(tmp_path, data):
    again = tmp_path / "again"
    main(["generate", "--regime", "popular", "--seed", "3", "--out", str(again)] + SMALL)
    for name in ("ratings.csv", "services.csv", "participation.csv", "manifest.json"):
        if name == "manifest.json":
            continue  # embeds the output paths
        assert _digest(data / name) == _digest(again / name)


def test_missing_regime_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["generate"])
    assert exc.value.code == 1


def test_infeasible_band_exits_3(tmp_path, capsys):
    code = main(["generate", "--regime", "very-popular", "--users", "50", "--services", "10",
                 "--capacity-min", "100", "--capacity-max", "150", "--out", str(tmp_path / "x")])
    assert code == 3
    assert "infeasible" in capsys.readouterr().err


def test_run_and_rerun_identical(tmp_path, data):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["run", "--data", str(data), "--strategy", "random", "--rounds", "8", "--seed", "4",
                     "--track-user", "u00", "--out", str(out)]) == 0
    assert _digest(a) == _digest(b)
    lines = a.read_text().splitlines()
    assert lines[0] == "round,strategy,variance,total_quality,mean_quality,F_u00"
    assert len(lines) == 9
    assert json.loads(a.with_suffix(".manifest.json").read_text())["config"]["strategy"] == "random"


def test_run_trace_and_new_user(tmp_path, data):
    out = tmp_path / "n.csv"
    code = main(["run", "--data", str(data), "--strategy", "d-fast", "--rounds", "10",
                 "--participation", f"trace:{data / 'participation.csv'}", "--new-user-at", "5",
                 "--new-user-id", "fresh", "--out", str(out)])
    assert code == 0
    assert out.read_text().splitlines()[0].endswith("F_fresh")


def test_fingerprint_mismatch_exits_2(tmp_path, data, capsys):
    with open(data / "ratings.csv", "a") as fh:
        fh.write("u00,s00,1.0001\n")
    code = main(["run", "--data", str(data), "--strategy", "f-fast", "--rounds", "2", "--out", str(tmp_path / "o.csv")])
    assert code == 2
    assert "fingerprint" in capsys.readouterr().err


def test_missing_data_exits_2(tmp_path):
    assert main(["run", "--data", str(tmp_path / "nope"), "--strategy", "f-fast"]) == 2


def test_exact_guard_exits_3(tmp_path, data):
    code = main(["run", "--data", str(data), "--strategy", "exact", "--rounds", "1", "--out", str(tmp_path / "e.csv")])
    assert code == 3


def test_bad_participation_is_usage_error(tmp_path, data):
    code = main(["run", "--data", str(data), "--strategy", "f-fast", "--participation", "bernoulli:2",
                 "--out", str(tmp_path / "e.csv")])
    assert code == 1


def test_env_default_out(tmp_path, data, monkeypatch):
    monkeypatch.setenv("TOPNFAIR_OUT", str(tmp_path / "envout"))
    assert main(["run", "--data", str(data), "--strategy", "quality-max", "--rounds", "2"]) == 0
    assert (tmp_path / "envout" / "quality-max-seed0.csv").exists()


def test_sweep_and_report(tmp_path, data, capsys):
    sweep = tmp_path / "sweep"
    code = main(["sweep", "--data", str(data), "--strategies", "f-fast,random", "--seeds", "0,1", "--rounds", "6",
                 "--jobs", "2", "--out-dir", str(sweep)])
    assert code == 0
    logs = sorted(sweep.glob("*.csv"))
    assert len(logs) == 4
    assert json.loads((sweep / "manifest.json").read_text())["seed"] == [0, 1]
    # the parallel sweep matches a serial single run
    single = tmp_path / "single.csv"
    main(["run", "--data", str(data), "--strategy", "random", "--rounds", "6", "--seed", "1", "--out", str(single)])
    assert _digest(single) == _digest(sweep / "random-seed1.csv")

    capsys.readouterr()
    charts = tmp_path / "charts"
    assert main(["report", *map(str, logs), "--chart", "variance", "--chart", "quality", "--out-dir", str(charts)]) == 0
    table = capsys.readouterr().out
    assert "final_variance" in table and "f-fast" in table
    svg = (charts / "variance.svg").read_bytes()
    main(["report", *map(str, logs), "--chart", "variance", "--out-dir", str(charts)])
    assert (charts / "variance.svg").read_bytes() == svg


def test_sweep_unknown_strategy(tmp_path, data):
    assert main(["sweep", "--data", str(data), "--strategies", "f-fast,ilp", "--out-dir", str(tmp_path)]) == 1


def test_report_mismatched_lengths(tmp_path, data, caplog):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["run", "--data", str(data), "--strategy", "f-fast", "--rounds", "3", "--out", str(a)])
    main(["run", "--data", str(data), "--strategy", "f-fast", "--rounds", "5", "--out", str(b)])
    assert main(["report", str(a), str(b)]) == 0
    assert "different round counts" in caplog.text


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "topnfair", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "generate" in proc.stdout
