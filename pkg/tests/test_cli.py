import json
import subprocess
import sys

import pytest

from dnstiming.cli import main


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture()
def tx(tmp_path):
    out = tmp_path / "tx.csv"
    assert run("simulate", "--profile", "local", "--queries", 3000, "--seed", 7, "--attack", "--out", out) == 0
    return out


def test_simulate_twice_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert run("simulate", "--profile", "local", "--queries", 1000, "--seed", 7, "--out", p) == 0
    assert a.read_bytes() == b.read_bytes()
    man = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    assert man["seed"] == 7 and man["command"] == "simulate"
    assert set(man["outputs"]) == {str(a)}


def test_seed_is_required(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        run("simulate", "--queries", 10, "--out", tmp_path / "x.csv")
    assert info.value.code == 1
    assert "--seed" in capsys.readouterr().err


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        run("sweep", "--bogus")
    assert info.value.code == 1
    assert "usage:" in capsys.readouterr().err


def test_missing_input_is_data_error_without_outputs(tmp_path):
    out = tmp_path / "det"
    assert run("detect", "--classifier", "knn", "--input", tmp_path / "nope.csv", "--seed", 1,
               "--out-dir", out) == 2
    assert not out.exists()


def test_malformed_input_is_data_error(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("#format=transactions/1\nqid,domain,rtt_us,level,label,contacts\nx,a.com,1,cache,benign,\n")
    assert run("sweep", "--input", bad, "--out", tmp_path / "s.csv") == 2
    assert not (tmp_path / "s.csv").exists()


def test_sweep_rows(tmp_path, tx):
    out = tmp_path / "sweep.csv"
    assert run("sweep", "--input", tx, "--alpha", "0:0.08:0.005", "--out", out) == 0
    lines = out.read_text().splitlines()
    assert lines[:2] == ["#format=sweep/1", "alpha,success_rate,retained_bins"]
    rates = [float(line.split(",")[1]) for line in lines[2:]]
    assert len(rates) == 17 and rates == sorted(rates, reverse=True)


def test_ingest_recovers_simulated_transactions(tmp_path):
    sim = tmp_path / "sim.csv"
    logs = tmp_path / "logs"
    assert run("simulate", "--queries", 500, "--seed", 3, "--out", sim, "--logs", logs) == 0
    out = tmp_path / "ing.csv"
    assert run("ingest", "--client", logs / "client.csv", "--resolver", logs / "resolver.csv",
               "--registry", logs / "registry.csv", "--out", out) == 0
    assert sorted(out.read_text().splitlines()) == sorted(sim.read_text().splitlines())


def test_analyze_outputs(tmp_path, tx):
    out = tmp_path / "an"
    assert run("analyze", "--input", tx, "--out-dir", out, "--interval", "80:160") == 0
    split = out.joinpath("cache_split.csv").read_text().splitlines()[2].split(",")
    assert 2000 < int(split[0]) < 60_000 and split[3] == "0"
    assert out.joinpath("intervals.csv").exists() and out.joinpath("domains.csv").exists()


@pytest.mark.parametrize("clf", ["rf", "knn", "naive"])
def test_detect_and_apply(tmp_path, tx, clf):
    out = tmp_path / clf
    assert run("detect", "--input", tx, "--classifier", clf, "--seed", 2, "--trees", 10,
               "--out-dir", out) == 0
    assert out.joinpath("metrics.csv").read_text().startswith("#format=metrics/1\nmetric,value\n")
    if clf != "naive":
        applied = tmp_path / f"{clf}-apply"
        assert run("detect", "--input", tx, "--apply", out / "model.txt", "--seed", 2, "--out-dir", applied) == 0
        assert applied.joinpath("predictions.csv").exists()


def test_naive_needs_attack_task(tmp_path, tx):
    assert run("detect", "--input", tx, "--classifier", "naive", "--task", "level", "--seed", 1,
               "--out-dir", tmp_path / "x") == 1


def test_config_defaults_and_overrides(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[run]\nqueries = 200\nseed = 5\nattack = true\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run("simulate", "--config", cfg, "--out", a) == 0
    assert run("simulate", "--queries", 200, "--seed", 5, "--attack", "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.csv"
    assert run("simulate", "--config", cfg, "--seed", 6, "--out", c) == 0
    assert c.read_bytes() != a.read_bytes()


def test_report_rerun_from_manifest(tmp_path, tx):
    rep = tmp_path / "rep"
    assert run("report", "--input", tx, "--seed", 1, "--trees", 5, "--out-dir", rep) == 0
    again = tmp_path / "again"
    assert run("report", "--manifest", rep / "manifest.json", "--out-dir", again) == 0
    for p in rep.iterdir():
        if p.name != "manifest.json":
            assert p.read_bytes() == (again / p.name).read_bytes()


def test_manifest_detects_changed_input(tmp_path, tx):
    out = tmp_path / "s.csv"
    assert run("sweep", "--input", tx, "--out", out) == 0
    tx.write_text(tx.read_text() + "1,extra.com,5,cache,benign,\n")
    assert run("report", "--manifest", str(out) + ".manifest.json", "--out-dir", tmp_path / "r") == 2


def test_refuses_to_overwrite_input(tmp_path, tx):
    before = tx.read_bytes()
    assert run("sweep", "--input", tx, "--out", tx) == 2
    assert tx.read_bytes() == before


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "dnstiming", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("simulate", "ingest", "analyze", "detect", "sweep", "report"):
        assert cmd in res.stdout
