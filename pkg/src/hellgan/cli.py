"""Command line entry point: ``hellgan {train,experiment,influence,covariance,oracle}``.

Exit status: 0 success, 1 configuration/usage error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .experiments import (
    ExperimentConfig, covariance_report, data_seed, influence_report, run_experiment,
    write_json, write_trace_csv,
)
from .inference import (
    ContaminantSpec, ConvergenceError, NumericalError, SingularityError, influence_functions,
    population_minimax, sandwich_covariance,
)
from .losses import LossKind
from .measures import derive_seed, gauss_hermite_rule, sample_contaminated, sample_latent
from .nn_core import ConfigError, GeneratorParams, init_params, pack
from .optim import TrainingDiverged, default_theta0, train

NUMERICAL = (SingularityError, ConvergenceError, NumericalError, TrainingDiverged,
             FloatingPointError, np.linalg.LinAlgError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file with ExperimentConfig fields")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--loss", help="gan | wgan | approx_hd | hd | hd_kde")
    common.add_argument("--epsilon", type=float, help="contamination fraction")
    common.add_argument("--bandwidth", type=float, help="KDE bandwidth for hd_kde")
    common.add_argument("--threads", type=int, help="worker processes for sweeps")
    p = _Parser(prog="hellgan", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("train", parents=[common], help="single training run, writes trace.csv")
    sub.add_parser("experiment", parents=[common], help="full contamination sweep")
    sub.add_parser("influence", parents=[common], help="influence-function report")
    sub.add_parser("covariance", parents=[common], help="sandwich covariance report")
    sub.add_parser("oracle", parents=[common], help="population minimax over an epsilon grid")
    return p


def _config(args, require=False) -> ExperimentConfig:
    if require and not args.config:
        raise UsageError(build_parser().format_usage() + "error: --config is required\n")
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig.desk()
    over = {}
    if args.seed is not None:
        over["master_seed"] = args.seed
    if args.out:
        over["output_dir"] = args.out
    if args.threads is not None:
        over["threads"] = args.threads
    if args.epsilon is not None:
        over["epsilon_grid"] = [args.epsilon]
    if args.loss:
        over["loss_grid"] = [args.loss]
    if args.bandwidth is not None:
        over["bandwidth_grid"] = [args.bandwidth]
    return ExperimentConfig.from_dict({**cfg.to_dict(), **over}) if over else cfg


def _single(cfg: ExperimentConfig, default_loss="approx_hd"):
    loss = cfg.loss_grid[0] if cfg.loss_grid else default_loss
    kind = LossKind.parse(loss, cfg.bandwidth_grid[0])
    eps = float(cfg.epsilon_grid[0])
    data = sample_contaminated(cfg.n, cfg.mu0, cfg.sigma0, eps, data_seed(cfg, eps, 0),
                               (cfg.contaminant_mean, cfg.contaminant_sd))
    seed = derive_seed(cfg.master_seed, "train", loss, eps, kind.kde and kind.kde.bandwidth)
    net0 = init_params(derive_seed(seed, "init"), cfg.init_scheme, kind.mode)
    return kind, eps, data, seed, net0


def cmd_train(args) -> int:
    cfg = _config(args)
    if not args.loss and not args.config:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "loss_grid": ["approx_hd"]})
    kind, eps, data, seed, net0 = _single(cfg)
    trace = train(cfg.train_config(seed), kind, data, default_theta0(data), net0, cfg.theta_star)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(out / "trace.csv", trace)
    th = trace.theta_hat
    print(f"{kind.label} eps={eps:g}: mu_hat={th.mu:.6f} sigma_hat={th.sigma:.6f} "
          f"rmsec={trace.records[-1].rmsec:.6f}")
    return 0


def cmd_experiment(args) -> int:
    cfg = _config(args, require=True)
    res = run_experiment(cfg)
    print(f"wrote {len(res['results'])} replications to {res['output_dir']}")
    return 0


def _h(cfg):
    return ContaminantSpec.gaussian(cfg.contaminant_mean, cfg.contaminant_sd)


def cmd_oracle(args) -> int:
    cfg = _config(args)
    rule = gauss_hermite_rule(64)
    net_init = init_params(derive_seed(cfg.master_seed, "oracle"), "uniform_small")
    rows, failed = [], False
    for eps in cfg.epsilon_grid:
        try:
            th, net = population_minimax(float(eps), _h(cfg), rule, cfg.theta_star,
                                         net_init=net_init)
            rows.append(dict(epsilon=eps, status="ok", mu=th.mu, sigma=th.sigma,
                             alpha=pack(net).tolist()))
        except ConvergenceError as exc:
            failed = True
            rows.append(dict(epsilon=eps, status="not_converged", grad_norm=exc.grad_norm))
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "oracle.json", {"kind": "population_minimax_path", "path": rows,
                                     "theta0": [cfg.mu0, cfg.sigma0]})
    for r in rows:
        print(r["epsilon"], r["status"], r.get("mu", ""), r.get("sigma", ""))
    return 2 if failed else 0


def cmd_influence(args) -> int:
    cfg = _config(args)
    rule = gauss_hermite_rule(64)
    net_init = init_params(derive_seed(cfg.master_seed, "oracle"), "uniform_small")
    _, alpha0 = population_minimax(0.0, _h(cfg), rule, cfg.theta_star, net_init=net_init)
    res = influence_functions(cfg.theta_star, alpha0, _h(cfg), rule)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "influence.json",
               influence_report(res, cfg.theta_star, alpha0, _h(cfg), rule))
    print("IF(theta) =", res.if_theta.tolist(), "residual =", res.residual)
    return 0


def cmd_covariance(args) -> int:
    cfg = _config(args)
    if not args.loss and not args.config:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "loss_grid": ["hd"]})
    kind, eps, data, seed, net0 = _single(cfg)
    if kind.name != "hd":
        raise ConfigError("the sandwich covariance is defined for the empirical Hellinger loss")
    trace = train(cfg.train_config(seed), kind, data, default_theta0(data), net0, cfg.theta_star)
    latent = sample_latent(cfg.n, derive_seed(seed, "latent"))
    est = sandwich_covariance(trace.net, trace.theta_hat, data, latent)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "covariance.json",
               covariance_report(est, trace.theta_hat, pack(trace.net), cfg.n,
                                 dict(epsilon=eps, seed=seed)))
    print("Sigma_theta / n =", (est.theta_block / cfg.n).tolist())
    return 0


COMMANDS = dict(train=cmd_train, experiment=cmd_experiment, influence=cmd_influence,
                covariance=cmd_covariance, oracle=cmd_oracle)


def cli_main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return 1
    except ConfigError as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return 1
    except NUMERICAL as exc:
        sys.stderr.write(f"numerical error: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"I/O error: {exc}\n")
        return 1


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
