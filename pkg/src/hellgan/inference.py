"""Sandwich covariance and influence functions for the full Hellinger loss.

Parameter order everywhere is (theta; alpha) = (mu, sigma, w1, b1, w2, b2),
18 coordinates in total.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg
from scipy.special import expit

from .losses import FULL_HD, _batch, evaluate
from .measures import (
    QuadratureRule, gauss_hermite_rule, gaussian_hessian_ratio, gaussian_score,
)
from .nn_core import (
    ConfigError, DiscriminatorNet, GeneratorParams, Mode, ModeError, N_ALPHA, N_THETA,
    _score_parts, disc_backward, disc_forward, disc_hessian_alpha, pack, unpack,
)
from .optim import AdamState, Direction, adam_step

N_PARAMS = N_THETA + N_ALPHA
MAX_CONDITION = 1e12


class SingularityError(np.linalg.LinAlgError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, msg, grad_norm):
        super().__init__(f"{msg} (final gradient norm {grad_norm:.3e})")
        self.grad_norm = grad_norm


class NumericalError(FloatingPointError):
    pass


def _require_prob(net):
    if net.mode is not Mode.PROBABILITY:
        raise ModeError("Hellinger inference needs a probability-mode discriminator")


def join(theta: GeneratorParams, net: DiscriminatorNet) -> np.ndarray:
    return np.concatenate([theta.as_array(), pack(net)])


def split(p) -> tuple[GeneratorParams, DiscriminatorNet]:
    return GeneratorParams.from_array(p[:N_THETA]), unpack(p[N_THETA:])


# -- linear algebra --------------------------------------------------------

def qr_solve(a, b):
    """Solve ``a x = b`` by column-pivoted QR; refuses ill-conditioned systems."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularityError(f"matrix is singular to working precision (condition {cond:.3e})")
    q, r, piv = scipy.linalg.qr(a, pivoting=True)
    y = q.T @ b
    z = scipy.linalg.solve_triangular(r, y)
    x = np.empty_like(z)
    x[piv] = z
    return x


# -- Hessian ---------------------------------------------------------------

def fd_jacobian(grad_fn: Callable, p, rel_step: float = 1e-4, symmetrize: bool = True):
    """Central differences of ``grad_fn`` around ``p``, step ``rel_step * (1 + |p_i|)``."""
    p = np.asarray(p, dtype=float)
    cols = []
    for i in range(p.size):
        h = rel_step * (1.0 + abs(p[i]))
        e = np.zeros_like(p)
        e[i] = h
        cols.append((np.asarray(grad_fn(p + e)) - np.asarray(grad_fn(p - e))) / (2.0 * h))
    jac = np.column_stack(cols)
    if not np.all(np.isfinite(jac)):
        bad = np.argwhere(~np.isfinite(jac))[0]
        raise NumericalError(f"non-finite Hessian entry at {tuple(bad)}")
    return 0.5 * (jac + jac.T) if symmetrize else jac


def hd2_gradient(p, data, latent) -> np.ndarray:
    """Joint gradient (theta; alpha) of the empirical full Hellinger objective."""
    theta, net = split(p)
    x, z = _batch(data), _batch(latent)
    ev = evaluate(FULL_HD, net, theta, x, np.full(x.size, 1.0 / x.size),
                  z, np.full(z.size, 1.0 / z.size))
    return np.concatenate([ev.grad_theta, ev.grad_alpha])


def hd2_hessian(net: DiscriminatorNet, theta: GeneratorParams, data, latent,
                symmetrize: bool = True) -> np.ndarray:
    _require_prob(net)
    return fd_jacobian(lambda p: hd2_gradient(p, data, latent), join(theta, net),
                       symmetrize=symmetrize)


# -- score pieces / sandwich -----------------------------------------------

@dataclass(frozen=True, eq=False)
class ScorePieces:
    delta1: np.ndarray  # (n, 2)
    delta2: np.ndarray  # (n, 16)
    s_matrix: np.ndarray  # (18, 18)


def score_pieces(net: DiscriminatorNet, theta: GeneratorParams, data, latent) -> ScorePieces:
    """Per-observation contributions to the joint score and their covariance.

    delta1(X) = sqrt(D(X)) E_Z[grad_theta D(G(Z)) / sqrt(1 - D(G(Z)))]
    delta2(X) = grad D(X) - grad D(X)/sqrt(D(X)) E_Z[sqrt(1 - D(G(Z)))]
                + sqrt(D(X)) E_Z[grad_alpha D(G(Z)) / sqrt(1 - D(G(Z)))]
    with E_Z as latent-batch means.  The covariance uses the 1/n convention.
    """
    _require_prob(net)
    x, z = _batch(data), _batch(latent)
    sx, dsx, _, _, _ = _score_parts(net, x)
    y = theta.sigma * z + theta.mu
    sy, dsy, dydx, _, _ = _score_parts(net, y)
    px, qx = expit(sx), expit(-sx)
    py, qy = expit(sy), expit(-sy)
    # grad D / sqrt(1 - D) = D sqrt(1 - D) grad s on the latent side
    k = py * np.sqrt(qy)
    e_theta = (k * dydx) @ np.stack([np.ones_like(z), z], axis=-1) / z.size
    e_alpha = k @ dsy / z.size
    b = np.mean(np.sqrt(qy))
    rpx = np.sqrt(px)
    d1 = rpx[:, None] * e_theta[None, :]
    grad_dx = (px * qx)[:, None] * dsx
    # grad D / sqrt(D) = sqrt(D) (1 - D) grad s
    d2 = grad_dx - (rpx * qx)[:, None] * dsx * b + rpx[:, None] * e_alpha[None, :]
    delta = np.hstack([d1, d2])
    centred = delta - delta.mean(axis=0)
    s = centred.T @ centred / len(x)
    return ScorePieces(d1, d2, 0.5 * (s + s.T))


@dataclass(frozen=True, eq=False)
class SandwichEstimate:
    j_matrix: np.ndarray
    s_matrix: np.ndarray
    sigma: np.ndarray

    @property
    def theta_block(self) -> np.ndarray:
        return self.sigma[:N_THETA, :N_THETA]


def sandwich_from_matrices(j, s) -> SandwichEstimate:
    """J^{-1} S J^{-T} by two linear solves."""
    j = np.asarray(j, dtype=float)
    s = np.asarray(s, dtype=float)
    a = qr_solve(j, s)            # J^{-1} S
    sig = qr_solve(j, a.T).T      # (J^{-1} (J^{-1} S)^T)^T = J^{-1} S J^{-T}
    return SandwichEstimate(j, s, 0.5 * (sig + sig.T))


def sandwich_covariance(net: DiscriminatorNet, theta: GeneratorParams, data, latent
                        ) -> SandwichEstimate:
    j = hd2_hessian(net, theta, data, latent)
    s = score_pieces(net, theta, data, latent).s_matrix
    return sandwich_from_matrices(j, s)


# -- contaminants and population integrals ---------------------------------

@dataclass(frozen=True)
class ContaminantSpec:
    """Gaussian(mean, sd) or a point mass at ``x0`` (``sd`` is None)."""

    mean: float
    sd: Optional[float] = 1.0

    def __post_init__(self):
        if self.sd is not None and not self.sd > 0:
            raise ConfigError("contaminant sd must be > 0")

    @classmethod
    def gaussian(cls, mean=0.0, sd=1.0):
        return cls(float(mean), float(sd))

    @classmethod
    def point_mass(cls, x0):
        return cls(float(x0), None)

    def points(self, rule: QuadratureRule):
        if self.sd is None:
            return np.array([self.mean]), np.array([1.0])
        return self.mean + self.sd * rule.nodes, rule.weights


def population_gradient(p, epsilon: float, h: ContaminantSpec, rule: QuadratureRule,
                        theta0: GeneratorParams, grad: bool = True):
    """Value and joint gradient of the contaminated population objective.

    Data side integrates against (1 - eps) q_theta0 + eps h, each Gaussian
    component with its own re-centred Gauss-Hermite nodes; the generator side
    integrates D(mu + sigma z) against the standard normal.
    """
    theta, net = split(p)
    x0 = theta0.mu + theta0.sigma * rule.nodes
    xh, wh = h.points(rule)
    x = np.concatenate([x0, xh])
    wx = np.concatenate([(1.0 - epsilon) * rule.weights, epsilon * wh])
    ev = evaluate(FULL_HD, net, theta, x, wx, rule.nodes, rule.weights, grad=grad)
    if not grad:
        return ev.value, None
    return ev.value, np.concatenate([ev.grad_theta, ev.grad_alpha])


def population_minimax(epsilon: float, h: ContaminantSpec, rule: QuadratureRule,
                       theta0: GeneratorParams = GeneratorParams(10.0, 1.5),
                       theta_init: Optional[GeneratorParams] = None,
                       net_init: Optional[DiscriminatorNet] = None,
                       lr: float = 1e-2, max_iter: int = 20000, tol: float = 1e-7,
                       newton_steps: int = 20):
    """Saddle point of the population objective by alternating full-gradient Adam.

    Adam ascends alpha and descends theta (sigma on the log scale) until the
    joint gradient norm drops to ``tol`` or ``max_iter``; a few Newton steps on
    the stationarity equations (finite-difference Jacobian) then polish the
    point.  Raises ``ConvergenceError`` if the norm is still above ``tol``.
    """
    if not 0.0 <= epsilon < 1.0:
        raise ConfigError("epsilon must lie in [0, 1)")
    theta = theta_init or theta0
    net = net_init if net_init is not None else unpack(np.zeros(N_ALPHA))
    _require_prob(net)
    alpha = pack(net)
    gen = np.array([theta.mu, np.log(theta.sigma)])
    st_a = AdamState.zeros(N_ALPHA, lr=lr)
    st_g = AdamState.zeros(2, lr=lr)

    def full(gen, alpha):
        p = np.concatenate([[gen[0], np.exp(gen[1])], alpha])
        return p, population_gradient(p, epsilon, h, rule, theta0)[1]

    p, g = full(gen, alpha)
    for _ in range(max_iter):
        if np.linalg.norm(g) <= tol:
            break
        st_a, alpha = adam_step(st_a, alpha, g[N_THETA:], Direction.MAXIMIZE)
        p, g = full(gen, alpha)
        st_g, gen = adam_step(st_g, gen, g[:N_THETA] * np.array([1.0, p[1]]))
        p, g = full(gen, alpha)

    grad_fn = lambda q: population_gradient(q, epsilon, h, rule, theta0)[1]
    for _ in range(newton_steps):
        if np.linalg.norm(g) <= tol * 1e-3:
            break
        try:
            step = qr_solve(fd_jacobian(grad_fn, p, rel_step=1e-5, symmetrize=False), g)
        except SingularityError:
            break
        p_new = p - step
        if p_new[1] <= 0:
            break
        g_new = grad_fn(p_new)
        if np.linalg.norm(g_new) >= np.linalg.norm(g):
            break
        p, g = p_new, g_new

    gnorm = float(np.linalg.norm(g))
    if not gnorm <= tol:
        raise ConvergenceError("population minimax did not reach stationarity", gnorm)
    return split(p)


# -- influence functions ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class IfResult:
    if_theta: np.ndarray
    if_alpha: np.ndarray
    blocks: dict
    residual: float


def _weighted(w, f):
    return np.tensordot(w, f, axes=(0, 0))


def if_blocks(theta0: GeneratorParams, alpha0: DiscriminatorNet, h: ContaminantSpec,
              rule: QuadratureRule) -> dict:
    """Every integral of the influence-function system, by quadrature.

    Integrals against q_theta0 use nodes mu0 + sigma0 z; the contrast
    integrals int f (h - q_theta0) use the contaminant's own nodes (or point
    evaluation for a point mass).
    """
    _require_prob(alpha0)
    x = theta0.mu + theta0.sigma * rule.nodes
    w = rule.weights
    xh, wh = h.points(rule)

    def parts(pts):
        s = _score_parts(alpha0, pts)[0]
        d, omd = expit(s), expit(-s)
        return d, omd, disc_backward(alpha0, pts).d_alpha

    d, omd, gd = parts(x)
    hd = disc_hessian_alpha(alpha0, x)
    sc = gaussian_score(theta0, x)
    ratio = gaussian_hessian_ratio(theta0, x)
    dh, omdh, gdh = parts(xh)
    rd, romd = np.sqrt(d), np.sqrt(omd)

    def contrast(fq, fh):
        return _weighted(wh, fh) - _weighted(w, fq)

    b = {}
    b["C1"] = _weighted(w, rd)
    b["C2"] = _weighted(w, romd)
    b["C1_alpha"] = _weighted(w, 0.5 * gd / rd[:, None])
    b["C2_alpha"] = _weighted(w, -0.5 * gd / romd[:, None])
    b["C2_theta"] = _weighted(w, romd[:, None] * sc)
    b["A1_alpha"] = _weighted(w, hd)
    b["A2_alpha"] = contrast(gd, gdh)
    b["B1_alpha"] = -b["A1_alpha"]
    b["B2_alpha"] = -_weighted(w, gd[:, :, None] * sc[:, None, :])
    b["B1_theta"] = -_weighted(w, sc[:, :, None] * gd[:, None, :])
    b["B2_theta"] = _weighted(w, omd[:, None, None] * ratio)
    outer = gd[:, :, None] * gd[:, None, :]
    b["C1_alpha_a"] = _weighted(w, 0.5 * hd / rd[:, None, None]
                                - 0.25 * outer / (d * rd)[:, None, None])
    b["C1_alpha_b"] = contrast(0.5 * gd / rd[:, None], 0.5 * gdh / np.sqrt(dh)[:, None])
    b["C1_a"] = b["C1_alpha"]
    b["C1_b"] = contrast(rd, np.sqrt(dh))
    b["C2_a"] = b["C2_alpha"]
    b["C2_b"] = b["C2_theta"]
    b["C2_alpha_a"] = _weighted(w, -0.25 * outer / (omd * romd)[:, None, None])
    b["C2_alpha_b"] = _weighted(w, -0.5 * hd / romd[:, None, None])
    b["C2_alpha_c"] = _weighted(w, -0.5 * gd[:, :, None] * sc[:, None, :] / romd[:, None, None])
    b["C2_theta_a"] = _weighted(w, romd[:, None, None] * ratio)
    b["C2_theta_b"] = _weighted(w, -0.5 * sc[:, :, None] * gd[:, None, :] / romd[:, None, None])

    C1, C2 = b["C1"], b["C2"]
    b["I0"] = b["A2_alpha"] - 2 * b["C1_alpha_b"] * C2 - 2 * b["C2_alpha"] * b["C1_b"]
    b["I_alpha"] = (b["A1_alpha"] + b["B1_alpha"] - 2 * b["C1_alpha_a"] * C2
                    - 2 * np.outer(b["C1_alpha"], b["C2_a"])
                    - 2 * np.outer(b["C2_alpha"], b["C1_a"])
                    - 2 * C1 * b["C2_alpha_a"] - 2 * C1 * b["C2_alpha_b"])
    b["I_theta"] = (b["B2_alpha"] - 2 * np.outer(b["C1_alpha"], b["C2_b"])
                    - 2 * C1 * b["C2_alpha_c"])
    b["K0"] = -2 * b["C2_theta"] * b["C1_b"]
    b["K_alpha"] = (b["B1_theta"] - 2 * np.outer(b["C2_theta"], b["C1_a"])
                    - 2 * C1 * b["C2_theta_b"])
    b["K_theta"] = b["B2_theta"] - 2 * C1 * b["C2_theta_a"]
    return b


def influence_functions(theta0: GeneratorParams, alpha0: DiscriminatorNet,
                        h: ContaminantSpec, rule: Optional[QuadratureRule] = None) -> IfResult:
    """Solve I0 + I_a IF(a) + I_t IF(t) = 0 and K0 + K_a IF(a) + K_t IF(t) = 0.

    Eliminates IF(theta) through K_theta and solves the 16x16 Schur system.
    """
    rule = rule or gauss_hermite_rule(64)
    if len(rule.nodes) < 64:
        raise ConfigError("influence functions need a quadrature rule with >= 64 nodes")
    b = if_blocks(theta0, alpha0, h, rule)
    kt_inv_k0 = qr_solve(b["K_theta"], b["K0"])
    kt_inv_ka = qr_solve(b["K_theta"], b["K_alpha"])
    schur = b["I_alpha"] - b["I_theta"] @ kt_inv_ka
    if_alpha = qr_solve(schur, b["I_theta"] @ kt_inv_k0 - b["I0"])
    if_theta = -(kt_inv_k0 + kt_inv_ka @ if_alpha)
    r1 = b["I0"] + b["I_alpha"] @ if_alpha + b["I_theta"] @ if_theta
    r2 = b["K0"] + b["K_alpha"] @ if_alpha + b["K_theta"] @ if_theta
    scale = max(np.abs(b[k]).max() for k in ("I0", "I_alpha", "I_theta", "K0", "K_alpha", "K_theta"))
    scale *= max(1.0, np.abs(if_alpha).max(initial=0.0), np.abs(if_theta).max(initial=0.0))
    residual = float(np.linalg.norm(np.concatenate([r1, r2])) / scale) if scale > 0 else 0.0
    return IfResult(if_theta, if_alpha, b, residual)
