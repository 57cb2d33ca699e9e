import json

import numpy as np

import pytest

from cmsnb.cli import main
from cmsnb.io import read_csv, write_csv

CFG = """
chains = 2
iterations = 120
burnin = 40
thin = 4
out = res
counts = sim/counts.csv
covariates = sim/covariates.csv
neighbors = sim/neighbors.csv
emission_covariates = beds
transition_covariates = newv
p23_covariates = newv
spatial = 23
prior.spat_sd.23 = 0.5
"""


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "run.cfg").write_text(CFG)
    assert main(["simulate", "--out", "sim", "--areas", "4", "--weeks", "30", "--seed", "2"]) == 0
    return tmp_path


def test_full_workflow(workdir, capsys):
    assert main(["fit", "--config", "run.cfg"]) == 0
    assert (workdir / "res" / "draws" / "meta.json").exists()
    assert main(["diagnose", "--config", "run.cfg"]) == 0
    assert main(["diagnose", "--config", "run.cfg", "--strict"]) == 6  # far too short to pass
    assert main(["states", "--config", "run.cfg"]) == 0
    header, rows = read_csv(workdir / "res" / "states.csv")
    assert header[-1] == "p_outbreak" and len(rows) == 4 * 30
    assert all(abs(sum(r[2:]) - 1) < 1e-12 for r in rows)
    assert main(["forecast", "--config", "run.cfg", "--horizon", "3"]) == 0
    assert len(read_csv(workdir / "res" / "forecast.csv")[1]) == 12
    capsys.readouterr()
    assert main(["waic", "--config", "run.cfg"]) == 0
    assert set(json.loads(capsys.readouterr().out)) == {"lpdd", "pwaic", "waic"}
    assert main(["eval-detect", "--scores", "res/states.csv",
                 "--truth", "sim/truth_states.csv"]) == 0
    assert 0 <= json.loads(capsys.readouterr().out)["auc"] <= 1


def test_score_needs_matching_fit(workdir, capsys):
    assert main(["fit", "--config", "run.cfg", "--set", "counts=sim/counts.csv"]) == 0
    assert main(["score", "--config", "run.cfg", "--week", "30"]) == 3
    assert "error: input:" in capsys.readouterr().err
    assert main(["fit", "--config", "run.cfg", "--through-week", "29", "--out", "rt"]) == 0
    capsys.readouterr()
    assert main(["score", "--config", "run.cfg", "--out", "rt", "--week", "30"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["week"] == 30 and np.isfinite(out["log_score"])
    assert main(["fit", "--config", "run.cfg", "--through-week", "31"]) == 4


def test_fit_flags_override_config(workdir):
    assert main(["fit", "--config", "run.cfg", "--chains", "1", "--iters", "30", "--burnin",
                 "10", "--variant", "non-coupled", "--out", "other"]) == 0
    meta = json.loads((workdir / "other" / "draws" / "meta.json").read_text())
    assert meta["n_chains"] == 1 and meta["config"]["model"]["spatial"] == []


def test_seeded_fits_are_byte_identical(workdir):
    for out in ("a", "b"):
        assert main(["fit", "--config", "run.cfg", "--out", out, "--seed", "9"]) == 0
    for f in (workdir / "a" / "draws").iterdir():
        if f.name == "run.cfg":  # records the output directory
            continue
        assert f.read_bytes() == (workdir / "b" / "draws" / f.name).read_bytes()


def test_error_categories(workdir, capsys):
    assert main(["fit", "--config", "missing.cfg"]) == 4
    assert "error: config:" in capsys.readouterr().err
    assert main(["fit", "--config", "run.cfg", "--set", "bogus=1"]) == 4
    capsys.readouterr()
    (workdir / "sim" / "counts.csv").write_text("area_id,week,count\na,1,-2\n")
    assert main(["fit", "--config", "run.cfg"]) == 3
    err = capsys.readouterr().err
    assert err.startswith("error: input:") and "counts.csv:2" in err
    assert main(["waic", "--config", "run.cfg", "--draws", "nowhere"]) == 3


def test_weights_command(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    write_csv("p.csv", ("area_id", "neighborhood_id", "n"),
              [("a", "h1", 5), ("a", "h2", 5), ("b", "h1", 1), ("b", "h2", 3), ("c", "h3", 2)])
    assert main(["weights", "--patients", "p.csv", "--k", "5", "--output", "w.csv"]) == 0
    header, rows = read_csv("w.csv")
    assert header == ["from_area", "to_area", "weight"]
    assert {(r[0], r[1]) for r in rows} == {("a", "b"), ("b", "a")}


def test_benchmark_simulation(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["simulate", "--kind", "benchmark", "--out", "bm"]) == 0
    _, rows = read_csv("bm/outbreaks.csv")
    assert len(rows) == 30 * 4
