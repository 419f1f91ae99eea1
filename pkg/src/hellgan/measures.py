"""Samplers, plug-in measures and the Gaussian-family closed forms.

All randomness goes through ``numpy.random.Generator(PCG64)``.  Normals are
drawn by inverse-CDF (``scipy.special.ndtri`` of a uniform), so every
draw consumes exactly one uniform and sequences match across platforms.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .nn_core import ConfigError, DomainError, GeneratorParams

SQRT_2PI = np.sqrt(2.0 * np.pi)


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(*coords) -> int:
    """Stable 63-bit seed from arbitrary coordinates.

    ``blake2b`` of the ``repr`` of the coordinate tuple, so the same cell
    always maps to the same seed regardless of process or platform.
    """
    digest = hashlib.blake2b(repr(tuple(coords)).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


def normal_draws(rng: np.random.Generator, size) -> np.ndarray:
    u = rng.random(size)
    # rng.random is on [0, 1); map 0 away from -inf
    u = np.where(u == 0.0, np.finfo(float).tiny, u)
    return ndtri(u)


@dataclass(frozen=True, eq=False)
class DataSample:
    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True, eq=False)
class LatentSample:
    values: np.ndarray
    seed: int


def sample_contaminated(n: int, mu0: float, sigma0: float, epsilon: float, seed: int,
                        contaminant=(0.0, 1.0)) -> DataSample:
    """n draws from (1 - eps) N(mu0, sigma0^2) + eps N(cm, cs^2)."""
    if not 0.0 <= epsilon <= 1.0:
        raise ConfigError(f"epsilon must lie in [0, 1], got {epsilon}")
    if n < 1:
        raise ConfigError("n must be >= 1")
    if sigma0 <= 0:
        raise ConfigError("sigma0 must be > 0")
    cm, cs = contaminant
    rng = rng_for(seed)
    outlier = rng.random(n) < epsilon
    z = normal_draws(rng, n)
    x = np.where(outlier, cm + cs * z, mu0 + sigma0 * z)
    x.setflags(write=False)
    prov = dict(mu0=mu0, sigma0=sigma0, epsilon=epsilon,
                contaminant_mean=cm, contaminant_sd=cs, seed=seed)
    return DataSample(x, prov)


def sample_latent(m: int, seed: int) -> LatentSample:
    if m < 1:
        raise ConfigError("m must be >= 1")
    z = normal_draws(rng_for(seed), m)
    z.setflags(write=False)
    return LatentSample(z, seed)


# -- quadrature ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes/weights with sum(w * f(x)) ~= E[f(Z)], Z ~ N(0, 1)."""

    nodes: np.ndarray
    weights: np.ndarray
    convention: str = "standard_normal_expectation"

    def expect(self, f, loc=0.0, scale=1.0):
        vals = np.asarray(f(loc + scale * self.nodes))
        return np.tensordot(self.weights, vals, axes=(0, 0))


def gauss_hermite_rule(k: int) -> QuadratureRule:
    if not 1 <= k <= 128:
        raise ConfigError(f"quadrature order must be in [1, 128], got {k}")
    x, w = np.polynomial.hermite_e.hermegauss(k)
    w = w / w.sum()
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(x, w)


# -- KDE -------------------------------------------------------------------

@dataclass(frozen=True)
class KdeSpec:
    bandwidth: float
    kernel: str = "gaussian"

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ConfigError(f"bandwidth must be > 0, got {self.bandwidth}")
        if self.kernel != "gaussian":
            raise ConfigError(f"unsupported kernel {self.kernel!r}")


def _values(data) -> np.ndarray:
    v = np.asarray(data.values if isinstance(data, DataSample) else data, dtype=float)
    if v.size == 0:
        raise DomainError("empty data sample")
    return v


def kde_density(data, spec: KdeSpec, x):
    v = _values(data)
    c = spec.bandwidth
    u = (np.subtract.outer(np.asarray(x, dtype=float), v)) / c
    return np.exp(-0.5 * u * u).sum(axis=-1) / (len(v) * c * SQRT_2PI)


def kde_points(data, spec: KdeSpec, rule: QuadratureRule):
    """Weighted point set representing the KDE measure (nodes per observation)."""
    v = _values(data)
    pts = (v[:, None] + spec.bandwidth * rule.nodes[None, :]).ravel()
    w = np.broadcast_to(rule.weights[None, :] / len(v), (len(v), len(rule.nodes))).ravel()
    return pts, w


def integrate_against_kde(f, data, spec: KdeSpec, rule: QuadratureRule) -> float:
    """(1/n) sum_i E[f(X_i + c eps)], eps ~ N(0, 1), by Gauss-Hermite per point."""
    pts, w = kde_points(data, spec, rule)
    return float(np.dot(w, f(pts)))


# -- Gaussian model closed forms ------------------------------------------

@dataclass(frozen=True)
class GaussianModel:
    theta: GeneratorParams

    def pdf(self, x):
        u = (np.asarray(x, dtype=float) - self.theta.mu) / self.theta.sigma
        return np.exp(-0.5 * u * u) / (self.theta.sigma * SQRT_2PI)

    def logpdf(self, x):
        u = (np.asarray(x, dtype=float) - self.theta.mu) / self.theta.sigma
        return -0.5 * u * u - np.log(self.theta.sigma * SQRT_2PI)

    def score(self, x):
        return gaussian_score(self.theta, x)

    def hessian_ratio(self, x):
        return gaussian_hessian_ratio(self.theta, x)


def gaussian_score(theta: GeneratorParams, x) -> np.ndarray:
    """grad_(mu, sigma) log q_theta(x), shape (..., 2)."""
    mu, s = theta.mu, theta.sigma
    d = np.asarray(x, dtype=float) - mu
    return np.stack([d / s**2, (d * d - s * s) / s**3], axis=-1)


def gaussian_hessian_ratio(theta: GeneratorParams, x) -> np.ndarray:
    """Hessian of q_theta(x) divided by q_theta(x): s s^T + grad s, shape (..., 2, 2)."""
    mu, s = theta.mu, theta.sigma
    d = np.asarray(x, dtype=float) - mu
    sc = gaussian_score(theta, x)
    ds = np.empty(d.shape + (2, 2))
    ds[..., 0, 0] = -1.0 / s**2
    ds[..., 0, 1] = ds[..., 1, 0] = -2.0 * d / s**3
    ds[..., 1, 1] = 1.0 / s**2 - 3.0 * d * d / s**4
    return sc[..., :, None] * sc[..., None, :] + ds
