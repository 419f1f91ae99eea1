"""Adversarial objectives and their exact gradients.

Every objective is evaluated on two weighted point sets: the data side
``(x, wx)`` and the latent side ``(z, wz)``.  A plain batch is the special
case of uniform weights; the KDE plug-in expands each observation into
Gauss-Hermite nodes; the population objective uses quadrature on both sides.

Square roots of ``D`` and ``1 - D`` are taken through ``expit(+-s)`` of the
pre-activation so that gradients stay finite when the sigmoid saturates.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit, log_expit

from .measures import DataSample, KdeSpec, LatentSample, QuadratureRule, kde_points
from .nn_core import (
    ConfigError, DiscriminatorNet, DomainError, GeneratorParams, Mode, ModeError,
    N_ALPHA, _score_parts,
)

D_CLAMP = 1e-7
_S_CLAMP = float(np.log((1.0 - D_CLAMP) / D_CLAMP))


class Variant(enum.Enum):
    CLASSICAL_GAN = "gan"
    WGAN = "wgan"
    APPROX_HD = "approx_hd"
    FULL_HD = "hd"


@dataclass(frozen=True)
class LossKind:
    variant: Variant
    kde: Optional[KdeSpec] = None

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.kde is not None and self.variant is not Variant.FULL_HD:
            raise ConfigError("a KDE plug-in only applies to the full Hellinger loss")

    @property
    def mode(self) -> Mode:
        return Mode.CRITIC if self.variant is Variant.WGAN else Mode.PROBABILITY

    @property
    def label(self) -> str:
        if self.variant is Variant.FULL_HD:
            return f"HD(c={self.kde.bandwidth:g})" if self.kde else "HD(empirical)"
        return {"gan": "GAN", "wgan": "WGAN", "approx_hd": "ApproxHD"}[self.variant.value]

    @property
    def name(self) -> str:
        if self.variant is Variant.FULL_HD and self.kde is not None:
            return "hd_kde"
        return self.variant.value

    @classmethod
    def parse(cls, name: str, bandwidth: Optional[float] = None) -> "LossKind":
        """``gan``, ``wgan``, ``approx_hd``, ``hd`` (empirical) or ``hd_kde`` (needs bandwidth)."""
        key = name.lower().replace("-", "_")
        if key == "hd_kde":
            if bandwidth is None:
                raise ConfigError("hd_kde needs a bandwidth")
            return cls(Variant.FULL_HD, KdeSpec(float(bandwidth)))
        try:
            return cls(Variant(key))
        except ValueError:
            raise ConfigError(f"unknown loss {name!r}") from None


CLASSICAL_GAN = LossKind(Variant.CLASSICAL_GAN)
WGAN = LossKind(Variant.WGAN)
APPROX_HD = LossKind(Variant.APPROX_HD)
FULL_HD = LossKind(Variant.FULL_HD)


@dataclass(frozen=True)
class LossEval:
    value: float
    grad_theta: np.ndarray
    grad_alpha: np.ndarray


@dataclass(frozen=True)
class HdPieces:
    h1n: float
    h2: float
    gamma_n: float
    a_mean: float
    b_mean: float

    @property
    def hd2(self) -> float:
        return self.h1n + self.h2 - 2.0 * self.gamma_n


def _batch(values) -> np.ndarray:
    if isinstance(values, (DataSample, LatentSample)):
        values = values.values
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise DomainError("empty batch")
    return v


def _uniform(v):
    return np.full(v.shape, 1.0 / v.size)


def data_side(kind: LossKind, data, kde_rule: Optional[QuadratureRule] = None):
    """Weighted data points for ``kind`` (empirical or KDE-smoothed)."""
    v = _batch(data)
    if kind.kde is None:
        return v, _uniform(v)
    if kde_rule is None:
        raise ConfigError("the KDE plug-in needs a quadrature rule")
    return kde_points(v, kind.kde, kde_rule)


def _check_mode(kind: LossKind, net: DiscriminatorNet):
    if net.mode is not kind.mode:
        raise ModeError(f"{kind.label} needs a {kind.mode.value}-mode discriminator, "
                        f"got {net.mode.value}")


def evaluate(kind: LossKind, net: DiscriminatorNet, theta: GeneratorParams,
             x, wx, z, wz, grad: bool = True):
    """Value (and gradients) of ``kind`` on weighted point sets.

    Returns a ``LossEval``; gradients are ``None`` when ``grad`` is false.
    Gradients are w.r.t. theta = (mu, sigma) and the flat alpha layout.
    """
    _check_mode(kind, net)
    y = theta.sigma * z + theta.mu
    sx, dsx, _, _, _ = _score_parts(net, x)
    sy, dsy, dydx, _, _ = _score_parts(net, y)
    jac = np.stack([np.ones_like(z), z], axis=-1)
    v = kind.variant

    if v is Variant.WGAN:
        value = wx @ sx - wz @ sy
        if not grad:
            return LossEval(float(value), None, None)
        ga = wx @ dsx - wz @ dsy
        gt = -(wz * dydx) @ jac
        return LossEval(float(value), gt, ga)

    if v is Variant.CLASSICAL_GAN:
        cx = np.clip(sx, -_S_CLAMP, _S_CLAMP)
        cy = np.clip(sy, -_S_CLAMP, _S_CLAMP)
        value = wx @ log_expit(cx) + wz @ log_expit(-cy)
        if not grad:
            return LossEval(float(value), None, None)
        # d/ds log D = 1 - D, d/ds log(1 - D) = -D, zero where clamped
        kx = wx * expit(-cx) * (np.abs(sx) < _S_CLAMP)
        ky = -wz * expit(cy) * (np.abs(sy) < _S_CLAMP)
        ga = kx @ dsx + ky @ dsy
        gt = (ky * dydx) @ jac
        return LossEval(float(value), gt, ga)

    px, qx = expit(sx), expit(-sx)
    py, qy = expit(sy), expit(-sy)
    rpx, rqy = np.sqrt(px), np.sqrt(qy)
    a = wx @ rpx
    b = wz @ rqy
    if v is Variant.APPROX_HD:
        value = 2.0 * a * b - 2.0
    else:
        value = wx @ px + wz @ qy - 2.0 * a * b
    if not grad:
        return LossEval(float(value), None, None)

    # per-point derivatives w.r.t. the pre-activation
    da_s = wx * 0.5 * rpx * qx          # d sqrt(D(x)) / ds
    db_s = -wz * 0.5 * rqy * py         # d sqrt(1 - D(y)) / ds
    ga_a = da_s @ dsx
    ga_b = db_s @ dsy
    gt_b = (db_s * dydx) @ jac
    if v is Variant.APPROX_HD:
        ga = 2.0 * (ga_a * b + a * ga_b)
        gt = 2.0 * a * gt_b
    else:
        dh2_s = -wz * py * qy
        ga = (wx * px * qx) @ dsx + dh2_s @ dsy - 2.0 * (ga_a * b + a * ga_b)
        gt = (dh2_s * dydx) @ jac - 2.0 * a * gt_b
    return LossEval(float(value), gt, ga)


def hd_pieces(net: DiscriminatorNet, theta: GeneratorParams, data, latent) -> HdPieces:
    if net.mode is not Mode.PROBABILITY:
        raise ModeError("Hellinger pieces need a probability-mode discriminator")
    x, z = _batch(data), _batch(latent)
    sx = _score_parts(net, x)[0]
    sy = _score_parts(net, theta.sigma * z + theta.mu)[0]
    a = float(np.mean(np.sqrt(expit(sx))))
    b = float(np.mean(np.sqrt(expit(-sy))))
    return HdPieces(float(np.mean(expit(sx))), float(np.mean(expit(-sy))), a * b, a, b)


def loss_value(kind: LossKind, net: DiscriminatorNet, theta: GeneratorParams,
               data, latent, kde_rule: Optional[QuadratureRule] = None) -> float:
    x, wx = data_side(kind, data, kde_rule)
    z = _batch(latent)
    return evaluate(kind, net, theta, x, wx, z, _uniform(z), grad=False).value


def loss_grads(kind: LossKind, net: DiscriminatorNet, theta: GeneratorParams,
               data, latent, kde_rule: Optional[QuadratureRule] = None) -> LossEval:
    x, wx = data_side(kind, data, kde_rule)
    z = _batch(latent)
    out = evaluate(kind, net, theta, x, wx, z, _uniform(z))
    if not (np.all(np.isfinite(out.grad_alpha)) and np.all(np.isfinite(out.grad_theta))):
        if np.isfinite(out.value):
            raise FloatingPointError("non-finite gradient at a finite loss value")
    return out


__all__ = [
    "Variant", "LossKind", "LossEval", "HdPieces", "CLASSICAL_GAN", "WGAN", "APPROX_HD",
    "FULL_HD", "evaluate", "data_side", "hd_pieces", "loss_value", "loss_grads", "N_ALPHA",
]
