"""Contamination sweeps: configuration, replication cells, metrics and files.

Seeding
-------
Each cell ``(loss, epsilon, bandwidth, rep)`` trains with
``derive_seed(master_seed, "cell", loss, epsilon, bandwidth, rep)``; its data
sample uses ``derive_seed(master_seed, "data", epsilon, rep)`` so that all
losses in a replication see the same observations (paired comparison).  The
discriminator is initialised from ``derive_seed(cell_seed, "init")``.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .inference import (
    ContaminantSpec, IfResult, SandwichEstimate, influence_functions, population_gradient,
    join,
)
from .losses import LossKind
from .measures import QuadratureRule, derive_seed, sample_contaminated
from .nn_core import ConfigError, GeneratorParams, init_params
from .optim import TrainConfig, TrainTrace, TrainingDiverged, default_theta0, train

log = logging.getLogger(__name__)

REPLICATION_HEADER = ["loss", "epsilon", "bandwidth", "rep", "seed", "status", "best_epoch",
                      "best_mse_mu", "best_mse_sigma", "best_rmsec", "final_mse_mu",
                      "final_mse_sigma", "final_rmsec"]
SUMMARY_HEADER = ["method", "epsilon", "metric", "median_x100", "sd_x100", "n_ok"]
TRACE_HEADER = ["epoch", "loss_value", "mu_hat", "sigma_hat", "mse_mu", "mse_sigma", "rmsec"]
METRICS = ("mse_mu", "mse_sigma", "rmsec")


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 100_000
    batch_size: int = 1000
    epochs: int = 400
    replications: int = 100
    mu0: float = 10.0
    sigma0: float = 1.5
    epsilon_grid: tuple = (0.0, 0.01, 0.05, 0.10, 0.20)
    loss_grid: tuple = ("gan", "wgan", "approx_hd", "hd_kde")
    bandwidth_grid: tuple = (0.0001, 0.01, 0.5)
    contaminant_mean: float = 0.0
    contaminant_sd: float = 1.0
    lr_gen: float = 1e-3
    lr_disc: float = 1e-3
    disc_steps_per_gen_step: int = 1
    latent_batch: Optional[int] = None
    wgan_clip: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    kde_nodes: int = 8
    init_scheme: str = "fan_in_normal"
    master_seed: int = 20240101
    output_dir: str = "results"
    threads: int = 1

    def __post_init__(self):
        for name in ("epsilon_grid", "loss_grid", "bandwidth_grid"):
            value = getattr(self, name)
            if isinstance(value, (str, bytes)) or not len(value):
                raise ConfigError(f"{name} must be a non-empty list")
            object.__setattr__(self, name, tuple(value))
        if self.replications < 1 or self.n < 1 or self.threads < 1:
            raise ConfigError("n, replications and threads must be >= 1")
        if any(not 0.0 <= e <= 1.0 for e in self.epsilon_grid):
            raise ConfigError("epsilon values must lie in [0, 1]")
        for name in self.loss_grid:
            LossKind.parse(name, self.bandwidth_grid[0])
        self.train_config(0)  # validates optimiser fields

    @classmethod
    def paper(cls, **kw) -> "ExperimentConfig":
        return cls(**kw)

    @classmethod
    def desk(cls, **kw) -> "ExperimentConfig":
        base = dict(n=20_000, epochs=200, replications=20)
        base.update(kw)
        return cls(**base)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("epsilon_grid", "loss_grid", "bandwidth_grid"):
            d[k] = list(d[k])
        return d

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr_gen=self.lr_gen,
                           lr_disc=self.lr_disc,
                           disc_steps_per_gen_step=self.disc_steps_per_gen_step,
                           latent_batch=self.latent_batch, wgan_clip=self.wgan_clip, seed=seed,
                           beta1=self.beta1, beta2=self.beta2, adam_eps=self.adam_eps,
                           kde_nodes=self.kde_nodes)

    @property
    def theta_star(self) -> GeneratorParams:
        return GeneratorParams(self.mu0, self.sigma0)


# -- metrics ---------------------------------------------------------------

def rmsec(theta_hat: GeneratorParams, theta_star: GeneratorParams) -> float:
    return math.sqrt(0.5 * ((theta_hat.mu - theta_star.mu) ** 2
                            + (theta_hat.sigma - theta_star.sigma) ** 2))


def select_best_epoch(trace, theta_star: GeneratorParams):
    """Earliest epoch with minimal RMSEC; returns ``(epoch, (mse_mu, mse_sigma, rmsec))``."""
    records = trace.records if isinstance(trace, TrainTrace) else trace
    if not records:
        raise ValueError("empty trace")
    best = None
    for r in records:
        th = r.theta_hat
        m = ((th.mu - theta_star.mu) ** 2, (th.sigma - theta_star.sigma) ** 2,
             rmsec(th, theta_star))
        if best is None or m[2] < best[1][2]:
            best = (r.epoch, m)
    return best


# -- cells -----------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    loss: str
    epsilon: float
    bandwidth: Optional[float]
    rep: int

    @property
    def kind(self) -> LossKind:
        return LossKind.parse(self.loss, self.bandwidth)

    def sort_key(self, cfg: ExperimentConfig):
        return (cfg.loss_grid.index(self.loss), self.bandwidth or 0.0, self.epsilon, self.rep)


def cells(cfg: ExperimentConfig) -> list:
    out = []
    for loss in cfg.loss_grid:
        bws = cfg.bandwidth_grid if loss == "hd_kde" else (None,)
        for bw in bws:
            for eps in cfg.epsilon_grid:
                for rep in range(cfg.replications):
                    out.append(Cell(loss, float(eps), None if bw is None else float(bw), rep))
    return out


def cell_seed(cfg: ExperimentConfig, cell: Cell) -> int:
    return derive_seed(cfg.master_seed, "cell", cell.loss, cell.epsilon, cell.bandwidth, cell.rep)


def data_seed(cfg: ExperimentConfig, epsilon: float, rep: int) -> int:
    return derive_seed(cfg.master_seed, "data", float(epsilon), rep)


@dataclass(frozen=True)
class ReplicationResult:
    loss: str
    epsilon: float
    bandwidth: Optional[float]
    rep: int
    seed: int
    status: str
    best_epoch: Optional[int] = None
    best_mse_mu: float = math.nan
    best_mse_sigma: float = math.nan
    best_rmsec: float = math.nan
    final_mse_mu: float = math.nan
    final_mse_sigma: float = math.nan
    final_rmsec: float = math.nan
    trace_summary: dict = field(default_factory=dict)


def run_cell(cfg: ExperimentConfig, cell: Cell) -> ReplicationResult:
    seed = cell_seed(cfg, cell)
    kind = cell.kind
    data = sample_contaminated(cfg.n, cfg.mu0, cfg.sigma0, cell.epsilon,
                               data_seed(cfg, cell.epsilon, cell.rep),
                               (cfg.contaminant_mean, cfg.contaminant_sd))
    net0 = init_params(derive_seed(seed, "init"), cfg.init_scheme, kind.mode)
    base = dict(loss=cell.loss, epsilon=cell.epsilon, bandwidth=cell.bandwidth, rep=cell.rep,
                seed=seed)
    try:
        trace = train(cfg.train_config(seed), kind, data, default_theta0(data), net0,
                      cfg.theta_star)
    except (TrainingDiverged, FloatingPointError, ValueError) as exc:
        log.warning("cell %s diverged: %s", cell, exc)
        return ReplicationResult(status="diverged", **base)
    epoch, (bm, bs, br) = select_best_epoch(trace, cfg.theta_star)
    last = trace.records[-1]
    summary = dict(final_mu=last.theta_hat.mu, final_sigma=last.theta_hat.sigma,
                   final_loss=last.loss_value)
    return ReplicationResult(status="ok", best_epoch=epoch, best_mse_mu=bm, best_mse_sigma=bs,
                             best_rmsec=br, final_mse_mu=last.mse_mu,
                             final_mse_sigma=last.mse_sigma, final_rmsec=last.rmsec,
                             trace_summary=summary, **base)


def _run_cell_star(args):
    return run_cell(*args)


# -- CSV / aggregation -----------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _write(path: Path, text: str):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def replications_rows(results) -> list:
    return [[getattr(r, k) for k in REPLICATION_HEADER] for r in results]


def method_label(loss: str, bandwidth) -> str:
    return LossKind.parse(loss, bandwidth).label


def summarize(results, cfg: Optional[ExperimentConfig] = None) -> list:
    """Median and SD (x100) of the best-epoch metrics per (method, epsilon).

    SD is the sample standard deviation (ddof=1) across Ok replications; it is
    left empty when fewer than two replications succeeded.
    """
    groups: dict = {}
    for r in results:
        groups.setdefault((r.loss, r.bandwidth, r.epsilon), []).append(r)

    def order(key):
        loss, bw, eps = key
        li = cfg.loss_grid.index(loss) if cfg and loss in cfg.loss_grid else 0
        return (li, loss, bw or 0.0, eps)

    rows = []
    for key in sorted(groups, key=order):
        loss, bw, eps = key
        ok = [r for r in groups[key] if r.status == "ok"]
        for metric in METRICS:
            vals = np.array([getattr(r, "best_" + metric) for r in ok], dtype=float)
            med = float(np.median(vals)) * 100.0 if len(vals) else None
            sd = float(np.std(vals, ddof=1)) * 100.0 if len(vals) > 1 else None
            rows.append([method_label(loss, bw), eps, metric, med, sd, len(ok)])
    return rows


def run_experiment(cfg: ExperimentConfig, output_dir=None) -> dict:
    """Run every cell, then write replications.csv, summary.csv and manifest.json."""
    out = Path(output_dir or cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.touch()
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc

    todo = cells(cfg)
    seeds = {c: cell_seed(cfg, c) for c in todo}
    if len(set(seeds.values())) != len(seeds):
        raise RuntimeError("child-seed collision across the sweep")
    t0 = time.perf_counter()
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(_run_cell_star, [(cfg, c) for c in todo]))
    else:
        results = [run_cell(cfg, c) for c in todo]
    results.sort(key=lambda r: Cell(r.loss, r.epsilon, r.bandwidth, r.rep).sort_key(cfg))

    _write(out / "replications.csv", _csv_text(REPLICATION_HEADER, replications_rows(results)))
    summary = summarize(results, cfg)
    _write(out / "summary.csv", _csv_text(SUMMARY_HEADER, summary))
    manifest = {
        "version": __version__,
        "config": cfg.to_dict(),
        "theta_star": [cfg.mu0, cfg.sigma0],
        "seeding": "cell seed = blake2b(master_seed, 'cell', loss, epsilon, bandwidth, rep); "
                   "data seed = blake2b(master_seed, 'data', epsilon, rep)",
        "summary_statistics": "median and sample SD (ddof=1) across ok replications of the "
                              "per-replication best-epoch metric, both x100",
        "cells": [dict(loss=c.loss, epsilon=c.epsilon, bandwidth=c.bandwidth, rep=c.rep,
                       seed=seeds[c], data_seed=data_seed(cfg, c.epsilon, c.rep))
                  for c in sorted(todo, key=lambda c: c.sort_key(cfg))],
    }
    write_json(out / "manifest.json", manifest)
    elapsed = time.perf_counter() - t0
    log.info("experiment finished: %d cells in %.1f s", len(todo), elapsed)
    with open(out / "run.log", "w") as fh:
        fh.write(f"cells={len(todo)} wall_clock_seconds={elapsed:.3f}\n")
    return {"results": results, "summary": summary, "output_dir": str(out)}


def write_trace_csv(path, trace: TrainTrace):
    rows = [[r.epoch, r.loss_value, r.theta_hat.mu, r.theta_hat.sigma, r.mse_mu, r.mse_sigma,
             r.rmsec] for r in trace.records]
    _write(Path(path), _csv_text(TRACE_HEADER, rows))


# -- JSON reports ----------------------------------------------------------

def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _mat(a):
    return np.asarray(a, dtype=float).tolist()


PARAM_LABELS = ["mu", "sigma"] + [f"w1[{i}]" for i in range(5)] + [f"b1[{i}]" for i in range(5)] \
    + [f"w2[{i}]" for i in range(5)] + ["b2"]


def covariance_report(est: SandwichEstimate, theta: GeneratorParams, alpha, n: int,
                      context: Optional[dict] = None) -> dict:
    return {
        "kind": "sandwich_covariance",
        "parameter_order": PARAM_LABELS,
        "theta_hat": [theta.mu, theta.sigma],
        "alpha_hat": _mat(alpha),
        "n": n,
        "J": _mat(est.j_matrix),
        "S": _mat(est.s_matrix),
        "Sigma": _mat(est.sigma),
        "Sigma_theta": _mat(est.theta_block),
        "context": context or {},
    }


BLOCK_NAMES = ("I0", "I_alpha", "I_theta", "K0", "K_alpha", "K_theta")


def influence_report(res: IfResult, theta0: GeneratorParams, alpha0, h: ContaminantSpec,
                     rule: QuadratureRule, epsilon: float = 0.0) -> dict:
    p = join(theta0, alpha0)
    gnorm = float(np.linalg.norm(population_gradient(p, epsilon, h, rule, theta0)[1]))
    return {
        "kind": "influence_functions",
        "theta0": [theta0.mu, theta0.sigma],
        "alpha0": _mat(p[2:]),
        "contaminant": {"mean": h.mean, "sd": h.sd},
        "quadrature_nodes": int(len(rule.nodes)),
        "if_theta": _mat(res.if_theta),
        "if_alpha": _mat(res.if_alpha),
        "residual": res.residual,
        "oracle_grad_norm": gnorm,
        "blocks": {k: _mat(res.blocks[k]) for k in BLOCK_NAMES},
    }


def run_inference_report(kind: str, path, **artifacts) -> dict:
    """Build and write a covariance or influence report from trained artifacts."""
    if kind == "covariance":
        report = covariance_report(**artifacts)
    elif kind == "influence":
        report = influence_report(**artifacts)
    else:
        raise ConfigError(f"unknown report kind {kind!r}")
    write_json(path, report)
    return report
