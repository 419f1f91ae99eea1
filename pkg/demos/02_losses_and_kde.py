# %% [markdown]
# # Four adversarial objectives
#
# The classical GAN log loss, the Wasserstein critic loss, the approximate
# Hellinger loss `2ab - 2` and the full Hellinger loss `h1 + h2 - 2ab`.
# Here `a` is the data mean of `sqrt(D)` and `b` is the latent mean of
# `sqrt(1 - D(G(z)))`.  The full loss can also smooth the data side with a
# Gaussian KDE, integrated by Gauss-Hermite quadrature.

# %%
import numpy as np

from hellgan.losses import (
    APPROX_HD, CLASSICAL_GAN, FULL_HD, WGAN, LossKind, hd_pieces, loss_grads, loss_value,
)
from hellgan.measures import gauss_hermite_rule, sample_contaminated, sample_latent
from hellgan.nn_core import GeneratorParams, Mode, disc_forward, init_params, zero_net

data = sample_contaminated(500, 10.0, 1.5, 0.1, seed=1)
latent = sample_latent(500, seed=2)
theta = GeneratorParams(10.0, 1.5)

# %% [markdown]
# At the zero net (D = 0.5 everywhere) the values are fixed constants:
# `2 ln 0.5`, `-1` and `0`.

# %%
for kind in (CLASSICAL_GAN, APPROX_HD, FULL_HD):
    print(f"{kind.label:>14}: {loss_value(kind, zero_net(), theta, data, latent):+.12f}")
print(f"{'WGAN':>14}: {loss_value(WGAN, zero_net(Mode.CRITIC), theta, data, latent):+.12f}")

# %% [markdown]
# At a generic net the full Hellinger value is a mean of squares,
# `mean_x mean_z (sqrt(D(x)) - sqrt(1 - D(G(z))))^2`.  It is therefore
# non-negative and never exceeds 1.

# %%
net = init_params(seed=4)
p = hd_pieces(net, theta, data, latent)
print(p)
x, z = data.values[:, None], theta.sigma * latent.values[None, :] + theta.mu
sq = (np.sqrt(disc_forward(net, x)) - np.sqrt(1 - disc_forward(net, z))) ** 2
print("pieces:", p.hd2, " mean of squares:", sq.mean())

# %% [markdown]
# Gradients are exact and averaged over both batches.

# %%
ev = loss_grads(APPROX_HD, net, theta, data, latent)
print("ApproxHD value", ev.value, "grad theta", ev.grad_theta)

# %% [markdown]
# With the KDE plug-in each observation becomes a small Gauss-Hermite cloud.
# As the bandwidth shrinks, the smoothed loss converges to the empirical one.

# %%
rule = gauss_hermite_rule(8)
for c in (0.5, 0.01, 1e-6):
    v = loss_value(LossKind.parse("hd_kde", c), net, theta, data, latent, rule)
    print(f"c = {c:g}: {v:.10f}")
print(f"empirical: {loss_value(FULL_HD, net, theta, data, latent):.10f}")
