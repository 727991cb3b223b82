import csv
import json
import time

import numpy as np
import pytest

from microcluster import cli
from microcluster.partition import canonicalize


def run(*argv):
    return cli.main([str(a) for a in argv])


def read(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def rows(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.reader(fh))


@pytest.mark.parametrize("model", ["nonexch", "crp2"])
def test_simulate_is_byte_reproducible(tmp_path, model):
    for name in ("a", "b"):
        assert run("simulate", "--n", 10, "--seed", 4, "--model", model, "--out", tmp_path / name) == 0
    files = ["partition.txt", "stats.json"] + (["latent.csv"] if model == "nonexch" else [])
    for f in files:
        assert read(tmp_path / "a" / f) == read(tmp_path / "b" / f)
    labels = [int(v) for v in read(tmp_path / "a" / "partition.txt").split()]
    assert canonicalize(labels).labels.tolist() == labels
    if model == "nonexch":
        latent = rows(tmp_path / "a" / "latent.csv")
        assert latent[0] == ["i", "tau", "theta", "cluster"] and len(latent) == 11
        # full round-trip precision
        assert all(float(repr(float(r[1]))) == float(r[1]) for r in latent[1:])


def test_simulate_crp_log_growth(tmp_path):
    run("simulate", "--n", 10_000, "--model", "crp2", "--sigma2", 0, "--kappa2", 1, "--out", tmp_path)
    stats = json.loads(read(tmp_path / "stats.json"))
    assert stats["k"] < 10 * np.log(10_000)


def test_invalid_parameters_are_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as err:
        run("simulate", "--n", 5, "--sigma", 1.5, "--out", tmp_path)
    assert err.value.code == 2
    assert "sigma" in capsys.readouterr().err


@pytest.fixture(scope="module")
def synthetic(tmp_path_factory):
    out = tmp_path_factory.mktemp("syn")
    run("simulate", "--n", 200, "--seed", 1, "--out", out)
    return out / "partition.txt"


def test_fit_crp2_surface_and_speed(tmp_path):
    run("simulate", "--n", 10_000, "--model", "crp2", "--sigma2", 0.4, "--kappa2", 2, "--out", tmp_path / "d")
    t0 = time.perf_counter()
    run("fit", tmp_path / "d" / "partition.txt", "--model", "crp2", "--out", tmp_path / "f")
    per_point = (time.perf_counter() - t0) / 25
    assert per_point < 1.0
    surface = rows(tmp_path / "f" / "surface.csv")
    assert surface[0] == ["sigma2", "kappa2", "log_likelihood"] and len(surface) == 26
    fit = json.loads(read(tmp_path / "f" / "fit.json"))
    assert abs(fit["params"]["sigma2"] - 0.4) < 0.1


def test_fit_nonexch_surface_rows(tmp_path, synthetic):
    run(
        "fit", synthetic, "--particles", 100, "--grid-sigma", "0.2,0.5,0.8", "--grid-xi", "1,2",
        "--zeta-depth", 1, "--replicates", 1, "--train-frac", 0.5, "--out", tmp_path,
    )
    surface = rows(tmp_path / "surface.csv")
    assert surface[0] == ["xi", "sigma", "zeta", "log_evidence", "se"]
    assert len(surface) - 1 == 3 * 2
    fit = json.loads(read(tmp_path / "fit.json"))
    assert fit["n_train"] == 100 and set(fit["params"]) == {"xi", "sigma", "zeta", "gamma"}


def test_predict_outputs(tmp_path, synthetic):
    (tmp_path / "fit").mkdir()
    (tmp_path / "fit" / "fit.json").write_text(
        json.dumps({"model": "nonexch", "params": {"xi": 1.0, "sigma": 0.5, "zeta": 1.0, "gamma": 1.0}})
    )
    args = ["predict", synthetic, "--fit", tmp_path / "fit" / "fit.json", "--particles", 200, "--samples", 20, "--seed", 3]
    run(*args, "--out", tmp_path / "a")
    run(*args, "--out", tmp_path / "b")
    for f in ("trajectories.csv", "errors.csv", "error_summary.csv", "bands.csv"):
        assert read(tmp_path / "a" / f) == read(tmp_path / "b" / f)
    summary = dict(rows(tmp_path / "a" / "error_summary.csv")[1:])
    assert float(summary["q05"]) <= float(summary["q95"])
    bands = rows(tmp_path / "a" / "bands.csv")
    assert bands[0] == ["r", "lower", "median", "upper", "mean", "observed"]
    assert [int(r[0]) for r in bands[1:]] == list(range(1, 11))
    assert all(float(r[1]) <= float(r[3]) for r in bands[1:])
    traj = rows(tmp_path / "a" / "trajectories.csv")
    assert traj[0][:4] == ["n", "cluster", "observed", "mean"] and len(traj[0]) == 24
    assert len(rows(tmp_path / "a" / "errors.csv")) == 21


def test_predict_crp_and_fit_mismatch(tmp_path, synthetic):
    run("predict", synthetic, "--model", "crp2", "--samples", 20, "--out", tmp_path / "c")
    assert (tmp_path / "c" / "bands.csv").exists()
    (tmp_path / "fit.json").write_text(json.dumps({"model": "crp2", "params": {"sigma2": 0.1, "kappa2": 1.0}}))
    with pytest.raises(SystemExit):
        run("predict", synthetic, "--fit", tmp_path / "fit.json", "--out", tmp_path / "d")


def test_graph_command(tmp_path):
    (tmp_path / "two.txt").write_text("a\na\n")
    run("graph", tmp_path / "two.txt", "--out", tmp_path / "g1")
    assert read(tmp_path / "g1" / "edges.txt") == "1 1\n"
    (tmp_path / "odd.txt").write_text("a\nb\nc\na\nd\n")
    run("graph", tmp_path / "odd.txt", "--out", tmp_path / "g2")
    summary = json.loads(read(tmp_path / "g2" / "graph.json"))
    assert summary["dropped_last_item"] and "warning" in summary
    assert sum(summary["degree_histogram"].values()) == summary["n_vertices"] == 3


def test_diagnose_command(tmp_path, capsys):
    code = run("diagnose", "--n", 5000, "--seed", 0, "--out", tmp_path / "a")
    out = capsys.readouterr().out
    assert code in (0, 1) and len(out.splitlines()) == 7
    report = json.loads(read(tmp_path / "a" / "report.json"))
    assert code == (0 if report["passed"] else 1)
    run("diagnose", "--n", 5000, "--seed", 0, "--out", tmp_path / "b")
    assert read(tmp_path / "a" / "report.json") == read(tmp_path / "b" / "report.json")
    run("diagnose", "--n", 2000, "--sigma", 0, "--out", tmp_path / "c")
    zero = json.loads(read(tmp_path / "c" / "report.json"))
    assert zero["regime"] == "vanishing_proportions"
    with pytest.raises(SystemExit):
        run("diagnose", "--n", 10, "--out", tmp_path / "d")
