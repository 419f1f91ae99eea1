"""Fixed 1-5-1 discriminator network and the location-scale generator.

Flat discriminator layout is ``(w1[0:5], b1[5:10], w2[10:15], b2[15])``.
Everything downstream (gradients, Hessians, Adam state) relies on it.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

HIDDEN = 5
N_ALPHA = 3 * HIDDEN + 1
N_THETA = 2

W1 = slice(0, HIDDEN)
B1 = slice(HIDDEN, 2 * HIDDEN)
W2 = slice(2 * HIDDEN, 3 * HIDDEN)
B2 = 3 * HIDDEN


class DomainError(ValueError):
    """Input outside the domain of an operation (non-finite, empty, ...)."""


class ModeError(ValueError):
    """Discriminator output mode does not suit the requested loss."""


class ConfigError(ValueError):
    """Invalid user-supplied configuration value."""


class Mode(enum.Enum):
    PROBABILITY = "probability"
    CRITIC = "critic"


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GeneratorParams:
    mu: float
    sigma: float

    def __post_init__(self):
        if not (np.isfinite(self.mu) and np.isfinite(self.sigma)):
            raise DomainError(f"non-finite generator parameters ({self.mu}, {self.sigma})")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")

    def as_array(self) -> np.ndarray:
        return np.array([self.mu, self.sigma])

    @classmethod
    def from_array(cls, a) -> "GeneratorParams":
        return cls(float(a[0]), float(a[1]))


@dataclass(frozen=True, eq=False)
class DiscriminatorNet:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    mode: Mode = Mode.PROBABILITY

    def __post_init__(self):
        for name in ("w1", "b1", "w2"):
            a = _frozen(getattr(self, name))
            if a.shape != (HIDDEN,):
                raise ValueError(f"{name} must have shape ({HIDDEN},), got {a.shape}")
            object.__setattr__(self, name, a)
        object.__setattr__(self, "b2", float(self.b2))
        object.__setattr__(self, "mode", Mode(self.mode))

    def __eq__(self, other):
        if not isinstance(other, DiscriminatorNet):
            return NotImplemented
        return self.mode == other.mode and np.array_equal(pack(self), pack(other))

    def with_mode(self, mode: Mode) -> "DiscriminatorNet":
        return unpack(pack(self), mode)


@dataclass(frozen=True)
class NetGradient:
    d_alpha: np.ndarray  # (..., 16)
    d_input: np.ndarray  # (...)


def zero_net(mode: Mode = Mode.PROBABILITY) -> DiscriminatorNet:
    return unpack(np.zeros(N_ALPHA), mode)


def pack(net: DiscriminatorNet) -> np.ndarray:
    return np.concatenate([net.w1, net.b1, net.w2, [net.b2]])


def unpack(alpha, mode: Mode = Mode.PROBABILITY) -> DiscriminatorNet:
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (N_ALPHA,):
        raise ValueError(f"expected {N_ALPHA} discriminator parameters, got shape {alpha.shape}")
    return DiscriminatorNet(alpha[W1], alpha[B1], alpha[W2], alpha[B2], mode)


@dataclass(frozen=True)
class ParamVec:
    """Flat parameter vector tagged with its layout ("generator" or "discriminator")."""

    values: np.ndarray
    layout: str

    def __post_init__(self):
        sizes = {"generator": N_THETA, "discriminator": N_ALPHA}
        if self.layout not in sizes:
            raise ValueError(f"unknown layout {self.layout!r}")
        v = _frozen(self.values)
        if v.shape != (sizes[self.layout],):
            raise ValueError(f"{self.layout} layout needs {sizes[self.layout]} values, got {v.shape}")
        object.__setattr__(self, "values", v)

    @classmethod
    def of_net(cls, net: DiscriminatorNet) -> "ParamVec":
        return cls(pack(net), "discriminator")

    @classmethod
    def of_theta(cls, theta: GeneratorParams) -> "ParamVec":
        return cls(theta.as_array(), "generator")


# -- discriminator ---------------------------------------------------------

def _check_finite(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("discriminator input must be finite")
    return x


def preactivation(net: DiscriminatorNet, x):
    """Pre-sigmoid score ``w2 . tanh(w1 x + b1) + b2`` (vectorised over x)."""
    x = _check_finite(x)
    h = np.tanh(np.multiply.outer(x, net.w1) + net.b1)
    return h @ net.w2 + net.b2


def disc_forward(net: DiscriminatorNet, x):
    s = preactivation(net, x)
    if net.mode is Mode.PROBABILITY:
        return expit(s)
    return s


def _score_parts(net: DiscriminatorNet, x):
    """Pre-activation, its alpha-gradient (..., 16) and its x-derivative."""
    x = _check_finite(x)
    h = np.tanh(np.multiply.outer(x, net.w1) + net.b1)
    g = 1.0 - h * h
    s = h @ net.w2 + net.b2
    ds = np.empty(x.shape + (N_ALPHA,))
    ds[..., B1] = g * net.w2
    ds[..., W1] = ds[..., B1] * x[..., None]
    ds[..., W2] = h
    ds[..., B2] = 1.0
    ds_dx = (g * net.w2) @ net.w1
    return s, ds, ds_dx, h, g


def disc_backward(net: DiscriminatorNet, x) -> NetGradient:
    s, ds, ds_dx, _, _ = _score_parts(net, x)
    if net.mode is Mode.CRITIC:
        return NetGradient(ds, ds_dx)
    p = expit(s)
    dp = p * expit(-s)
    return NetGradient(ds * dp[..., None], ds_dx * dp)


def disc_hessian_alpha(net: DiscriminatorNet, x) -> np.ndarray:
    """Second derivative of the output w.r.t. alpha, shape (..., 16, 16)."""
    s, ds, _, h, g = _score_parts(net, x)
    x = np.asarray(x, dtype=float)
    gp = -2.0 * h * g  # d/du (1 - tanh^2)
    x_ = x[..., None]
    d2s = np.zeros(x.shape + (N_ALPHA, N_ALPHA))
    k = np.arange(HIDDEN)
    iw1, ib1, iw2 = k, k + HIDDEN, k + 2 * HIDDEN
    c = gp * net.w2
    d2s[..., iw1, iw1] = c * x_ * x_
    d2s[..., ib1, ib1] = c
    d2s[..., iw1, ib1] = d2s[..., ib1, iw1] = c * x_
    d2s[..., iw1, iw2] = d2s[..., iw2, iw1] = g * x_
    d2s[..., ib1, iw2] = d2s[..., iw2, ib1] = g
    if net.mode is Mode.CRITIC:
        return d2s
    p = expit(s)
    d1 = p * expit(-s)
    d2 = d1 * (1.0 - 2.0 * p)
    outer = ds[..., :, None] * ds[..., None, :]
    return d2[..., None, None] * outer + d1[..., None, None] * d2s


# -- generator -------------------------------------------------------------

def gen_forward(theta: GeneratorParams, z):
    if not theta.sigma > 0:
        raise ValueError("sigma must be > 0")
    return theta.sigma * np.asarray(z, dtype=float) + theta.mu


def gen_jacobian(theta: GeneratorParams, z) -> np.ndarray:
    """(dx/dmu, dx/dsigma) = (1, z), shape (..., 2)."""
    z = np.asarray(z, dtype=float)
    return np.stack([np.ones_like(z), z], axis=-1)


# -- initialisation --------------------------------------------------------

INIT_SCHEMES = ("uniform_small", "fan_in_normal")


def init_params(seed: int, scheme: str = "fan_in_normal",
                mode: Mode = Mode.PROBABILITY) -> DiscriminatorNet:
    """Deterministic discriminator initialisation.

    ``uniform_small`` draws every weight from U(-0.1, 0.1).  ``fan_in_normal``
    draws N(0, 1/fan_in) truncated to 3/sqrt(fan_in) (fan_in = 1 for the
    hidden layer, 5 for the output layer).  Biases are drawn the same way.
    """
    if scheme not in INIT_SCHEMES:
        raise ConfigError(f"unknown init scheme {scheme!r}; choose from {INIT_SCHEMES}")
    rng = np.random.default_rng(seed)
    if scheme == "uniform_small":
        return unpack(rng.uniform(-0.1, 0.1, N_ALPHA), mode)
    fan_in = np.r_[np.ones(2 * HIDDEN), np.full(HIDDEN + 1, float(HIDDEN))]
    scale = 1.0 / np.sqrt(fan_in)
    z = rng.standard_normal(N_ALPHA)
    z = np.clip(z, -3.0, 3.0)
    return unpack(z * scale, mode)
