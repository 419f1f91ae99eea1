import csv
import json
import math
import statistics

import numpy as np
import pytest

from hellgan.experiments import (
    REPLICATION_HEADER, SUMMARY_HEADER, Cell, ExperimentConfig, cell_seed, cells, data_seed,
    rmsec, run_experiment, run_inference_report, select_best_epoch, summarize, write_json,
)
from hellgan.inference import ContaminantSpec, influence_functions, sandwich_from_matrices
from hellgan.measures import gauss_hermite_rule
from hellgan.nn_core import ConfigError, GeneratorParams, unpack
from hellgan.optim import EpochRecord

STAR = GeneratorParams(10.0, 1.5)


def tiny(**kw):
    base = dict(n=300, batch_size=100, epochs=3, replications=2, epsilon_grid=[0.0, 0.2],
                loss_grid=["gan", "approx_hd", "hd_kde"], bandwidth_grid=[0.5], kde_nodes=4,
                master_seed=5)
    base.update(kw)
    return ExperimentConfig.from_dict(base)


def trace_of(pairs):
    return [EpochRecord(i + 1, GeneratorParams(mu, sg), 0.0, 0.0, 0.0, 0.0)
            for i, (mu, sg) in enumerate(pairs)]


def test_rmsec_examples():
    assert rmsec(STAR, STAR) == 0.0
    assert rmsec(GeneratorParams(11.0, 1.5), STAR) == pytest.approx(0.7071067812, abs=1e-10)
    assert rmsec(GeneratorParams(9.0, 2.5), STAR) == pytest.approx(1.0, abs=1e-15)
    assert rmsec(GeneratorParams(9.0, 1.5), STAR) == rmsec(GeneratorParams(11.0, 1.5), STAR)


def test_best_epoch_rules():
    decreasing = trace_of([(10 + 1 / k, 1.5) for k in range(1, 6)])
    assert select_best_epoch(decreasing, STAR)[0] == 5
    constant = trace_of([(10.3, 1.5)] * 4)
    assert select_best_epoch(constant, STAR)[0] == 1
    # hand-built: distances 9..3, then 0.5 at epoch 7, then 2, 2, 1
    offsets = [9, 8, 7, 6, 5, 3, 0.5, 2, 2, 1]
    ep, (mm, ms, r) = select_best_epoch(trace_of([(10 + o, 1.5) for o in offsets]), STAR)
    assert ep == 7
    assert (mm, ms) == (0.25, 0.0)
    assert r == pytest.approx(math.sqrt(0.125))
    with pytest.raises(ValueError):
        select_best_epoch([], STAR)


def test_config_profiles_and_validation():
    paper = ExperimentConfig.paper()
    assert (paper.n, paper.batch_size, paper.epochs, paper.replications) == (100_000, 1000, 400, 100)
    assert (paper.mu0, paper.sigma0, paper.lr_gen) == (10.0, 1.5, 1e-3)
    assert paper.epsilon_grid == (0.0, 0.01, 0.05, 0.10, 0.20)
    assert paper.bandwidth_grid == (0.0001, 0.01, 0.5)
    desk = ExperimentConfig.desk()
    assert (desk.n, desk.epochs, desk.replications) == (20_000, 200, 20)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"n": 10, "learning_rate": 0.1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"epsilon_grid": []})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"loss_grid": ["mmd"]})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"replications": 0})
    cfg = tiny()
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_cells_and_seeds():
    cfg = tiny(replications=3)
    cs = cells(cfg)
    assert len(cs) == 3 * 2 * 3
    seeds = {cell_seed(cfg, c) for c in cs}
    assert len(seeds) == len(cs)
    # data are paired across losses for the same (epsilon, rep)
    assert data_seed(cfg, 0.2, 1) == data_seed(cfg, 0.2, 1)
    assert data_seed(cfg, 0.2, 1) != data_seed(cfg, 0.2, 2)
    kde_cells = [c for c in cs if c.loss == "hd_kde"]
    assert {c.bandwidth for c in kde_cells} == {0.5}
    assert all(c.bandwidth is None for c in cs if c.loss != "hd_kde")


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_row_accounting(tmp_path):
    cfg = tiny(replications=1, loss_grid=["approx_hd"], epsilon_grid=[0.1])
    run_experiment(cfg, tmp_path)
    reps = _read(tmp_path / "replications.csv")
    summ = _read(tmp_path / "summary.csv")
    assert reps[0] == REPLICATION_HEADER and len(reps) == 2
    assert summ[0] == SUMMARY_HEADER
    assert [r[2] for r in summ[1:]] == ["mse_mu", "mse_sigma", "rmsec"]
    # one replication: median defined, SD left empty
    assert all(r[3] != "" and r[4] == "" and r[5] == "1" for r in summ[1:])
    assert open(tmp_path / "summary.csv", "rb").read().count(b"\r\n") == 4


def test_experiment_is_deterministic_and_summary_recomputes(tmp_path):
    cfg = tiny()
    run_experiment(cfg, tmp_path / "b")
    run_experiment(cfg, tmp_path / "a")
    for name in ("replications.csv", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    first = (tmp_path / "a" / "manifest.json").read_bytes()
    run_experiment(cfg, tmp_path / "a")
    assert (tmp_path / "a" / "manifest.json").read_bytes() == first

    # independent recomputation from replications.csv
    labels = {"gan": "GAN", "approx_hd": "ApproxHD"}
    groups = {}
    for row in _read(tmp_path / "a" / "replications.csv")[1:]:
        rec = dict(zip(REPLICATION_HEADER, row))
        if rec["status"] != "ok":
            continue
        label = labels.get(rec["loss"]) or f"HD(c={float(rec['bandwidth']):g})"
        for m in ("mse_mu", "mse_sigma", "rmsec"):
            groups.setdefault((label, float(rec["epsilon"]), m), []).append(float(rec["best_" + m]))
    summ = _read(tmp_path / "a" / "summary.csv")[1:]
    assert len(summ) == len(groups)
    for method, eps, metric, med, sd, n_ok in summ:
        vals = groups[(method, float(eps), metric)]
        assert int(n_ok) == len(vals)
        assert abs(float(med) - statistics.median(vals) * 100) <= 1e-12 * max(1, abs(float(med)))
        assert abs(float(sd) - statistics.stdev(vals) * 100) <= 1e-12 * max(1, abs(float(sd)))

    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["config"] == cfg.to_dict()
    assert len(manifest["cells"]) == len(cells(cfg))
    assert "wall_clock" not in json.dumps(manifest)
    assert "wall_clock_seconds" in (tmp_path / "a" / "run.log").read_text()


def test_best_metrics_bound_the_trace(tmp_path):
    cfg = tiny(replications=1, loss_grid=["gan"], epsilon_grid=[0.05], epochs=4)
    res = run_experiment(cfg, tmp_path)["results"][0]
    assert 1 <= res.best_epoch <= 4
    assert res.best_rmsec <= res.final_rmsec


def test_diverged_rows_excluded_from_summary():
    from hellgan.experiments import ReplicationResult
    ok = [ReplicationResult("gan", 0.1, None, r, r, "ok", 1, v, v, v, v, v, v)
          for r, v in enumerate([0.1, 0.3, 0.2])]
    bad = ReplicationResult("gan", 0.1, None, 9, 9, "diverged")
    rows = summarize(ok + [bad])
    assert [r[5] for r in rows] == [3, 3, 3]
    assert rows[0][3] == pytest.approx(20.0)
    assert all(not (isinstance(v, float) and math.isnan(v)) for r in rows for v in r)


def test_unwritable_output(tmp_path):
    target = tmp_path / "file"
    target.write_text("x")
    with pytest.raises(OSError):
        run_experiment(tiny(replications=1), target / "sub")


def test_report_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    a = rng.normal(size=(18, 18))
    est = sandwich_from_matrices(a @ a.T + 18 * np.eye(18), np.eye(18))
    rep = run_inference_report("covariance", tmp_path / "cov.json", est=est,
                               theta=GeneratorParams(10.1, 1.4), alpha=np.arange(16.0), n=500)
    back = json.loads((tmp_path / "cov.json").read_text())
    assert np.asarray(back["Sigma"]).tobytes() == est.sigma.tobytes()
    assert back == json.loads(json.dumps(rep))
    with pytest.raises(ConfigError):
        run_inference_report("plots", tmp_path / "x.json")


def test_influence_report_contents(tmp_path):
    a = np.random.default_rng(3).normal(scale=0.15, size=16)
    a[5:10] = -a[0:5] * 10.0
    net = unpack(a)
    rule = gauss_hermite_rule(64)
    h = ContaminantSpec.gaussian(0.0, 1.0)
    res = influence_functions(STAR, net, h, rule)
    rep = run_inference_report("influence", tmp_path / "if.json", res=res, theta0=STAR,
                               alpha0=net, h=h, rule=rule)
    assert rep["residual"] <= 1e-8
    assert np.all(np.isfinite(rep["if_theta"]))
    assert set(rep["blocks"]) == {"I0", "I_alpha", "I_theta", "K0", "K_alpha", "K_theta"}
    assert json.loads((tmp_path / "if.json").read_text())["if_theta"] == rep["if_theta"]


def test_write_json_rejects_nan(tmp_path):
    with pytest.raises(ValueError):
        write_json(tmp_path / "bad.json", {"x": float("nan")})


def test_cell_sort_key_orders_by_grid():
    cfg = tiny()
    c1, c2 = Cell("hd_kde", 0.0, 0.5, 0), Cell("gan", 0.2, None, 1)
    assert sorted([c1, c2], key=lambda c: c.sort_key(cfg)) == [c2, c1]
