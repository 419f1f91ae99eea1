"""Adam and the alternating minimax training loop."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .losses import LossKind, Variant, data_side, evaluate
from .measures import DataSample, gauss_hermite_rule, normal_draws, rng_for
from .nn_core import (
    ConfigError, DiscriminatorNet, GeneratorParams, ModeError, ParamVec, pack, unpack,
)


class Direction(enum.Enum):
    MINIMIZE = "minimize"
    MAXIMIZE = "maximize"


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, batch: int, what: str):
        super().__init__(f"non-finite {what} at epoch {epoch}, batch {batch}")
        self.epoch, self.batch, self.what = epoch, batch, what


@dataclass(frozen=True, eq=False)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int, **hyper) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0, **hyper)


def adam_step(state: AdamState, params, grad, direction: Direction = Direction.MINIMIZE):
    """One bias-corrected Adam update; returns ``(new_state, new_params)``.

    ``params`` may be a ``ParamVec`` (returned re-wrapped) or a plain array.
    """
    p = params.values if isinstance(params, ParamVec) else np.asarray(params, dtype=float)
    g = np.asarray(grad, dtype=float)
    if g.shape != p.shape or state.m.shape != p.shape:
        raise ValueError(f"shape mismatch: params {p.shape}, grad {g.shape}, state {state.m.shape}")
    if direction is Direction.MAXIMIZE:
        g = -g
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * (g * g)
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_p = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = replace(state, m=m, v=v, t=t)
    if isinstance(params, ParamVec):
        return new_state, ParamVec(new_p, params.layout)
    return new_state, new_p


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 1000
    lr_gen: float = 1e-3
    lr_disc: float = 1e-3
    disc_steps_per_gen_step: int = 1
    latent_batch: Optional[int] = None  # defaults to batch_size
    wgan_clip: float = 0.01
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    kde_nodes: int = 16

    def __post_init__(self):
        for name in ("epochs", "batch_size", "disc_steps_per_gen_step", "kde_nodes"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.latent_batch is not None and self.latent_batch < 1:
            raise ConfigError("latent_batch must be >= 1")
        if not (self.lr_gen > 0 and self.lr_disc > 0):
            raise ConfigError("learning rates must be > 0")
        if not self.wgan_clip > 0:
            raise ConfigError("wgan_clip must be > 0")

    @property
    def m(self) -> int:
        return self.latent_batch or self.batch_size


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    theta_hat: GeneratorParams
    loss_value: float
    mse_mu: float
    mse_sigma: float
    rmsec: float


@dataclass(frozen=True, eq=False)
class TrainTrace:
    records: list = field(default_factory=list)
    theta_hat: Optional[GeneratorParams] = None
    net: Optional[DiscriminatorNet] = None


def default_theta0(data) -> GeneratorParams:
    """Sample median for the location and unit scale."""
    v = data.values if isinstance(data, DataSample) else np.asarray(data)
    return GeneratorParams(float(np.median(v)), 1.0)


def _theta_star(data, theta_star):
    if theta_star is not None:
        return theta_star
    prov = getattr(data, "provenance", {}) or {}
    if "mu0" in prov:
        return GeneratorParams(prov["mu0"], prov["sigma0"])
    raise ConfigError("theta_star not given and data carries no provenance")


def train(config: TrainConfig, kind: LossKind, data, theta0: GeneratorParams,
          net0: DiscriminatorNet, theta_star: Optional[GeneratorParams] = None) -> TrainTrace:
    """Alternating ascent on alpha / descent on theta, one data pass per epoch.

    sigma is optimised as log(sigma).  Scores are against ``theta_star``
    (default: the clean parameters recorded in the data provenance).
    """
    if net0.mode is not kind.mode:
        raise ModeError(f"{kind.label} needs a {kind.mode.value}-mode discriminator")
    star = _theta_star(data, theta_star)
    x_all = np.asarray(data.values if isinstance(data, DataSample) else data, dtype=float)
    n = len(x_all)
    rule = gauss_hermite_rule(config.kde_nodes) if kind.kde is not None else None
    rng = rng_for(config.seed)
    hyper = dict(beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps)

    alpha = pack(net0)
    gen = np.array([theta0.mu, np.log(theta0.sigma)])
    st_a = AdamState.zeros(alpha.size, lr=config.lr_disc, **hyper)
    st_g = AdamState.zeros(2, lr=config.lr_gen, **hyper)
    wz = np.full(config.m, 1.0 / config.m)
    clip = kind.variant is Variant.WGAN
    n_batches = -(-n // config.batch_size)
    records = []

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        losses = []
        for bi in range(n_batches):
            xb = x_all[order[bi * config.batch_size:(bi + 1) * config.batch_size]]
            x, wx = data_side(kind, xb, rule)
            theta = GeneratorParams(gen[0], float(np.exp(gen[1])))
            for _ in range(config.disc_steps_per_gen_step):
                z = normal_draws(rng, config.m)
                ev = evaluate(kind, unpack(alpha, kind.mode), theta, x, wx, z, wz)
                if not np.all(np.isfinite(ev.grad_alpha)):
                    raise TrainingDiverged(epoch, bi, "discriminator gradient")
                st_a, alpha = adam_step(st_a, alpha, ev.grad_alpha, Direction.MAXIMIZE)
                if clip:
                    alpha = np.clip(alpha, -config.wgan_clip, config.wgan_clip)
            z = normal_draws(rng, config.m)
            ev = evaluate(kind, unpack(alpha, kind.mode), theta, x, wx, z, wz)
            g = ev.grad_theta * np.array([1.0, theta.sigma])  # chain rule to log sigma
            if not (np.isfinite(ev.value) and np.all(np.isfinite(g))):
                raise TrainingDiverged(epoch, bi, "generator loss/gradient")
            st_g, gen = adam_step(st_g, gen, g, Direction.MINIMIZE)
            if not np.all(np.isfinite(gen)) or np.exp(gen[1]) <= 0:
                raise TrainingDiverged(epoch, bi, "generator parameters")
            losses.append(ev.value)
        th = GeneratorParams(gen[0], float(np.exp(gen[1])))
        em, es = (th.mu - star.mu) ** 2, (th.sigma - star.sigma) ** 2
        records.append(EpochRecord(epoch, th, float(np.mean(losses)), em, es,
                                   float(np.sqrt(0.5 * (em + es)))))
    return TrainTrace(records, records[-1].theta_hat, unpack(alpha, kind.mode))
