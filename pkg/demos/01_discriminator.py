# %% [markdown]
# # The 1-5-1 discriminator
#
# `D_alpha(x)` is a tiny network: five tanh hidden units and a sigmoid output.
# Its 16 weights live in one flat vector, laid out as `w1 | b1 | w2 | b2`.
# This script evaluates the net, checks its analytic gradients against finite
# differences, and shows the critic (logit) mode used by WGAN.

# %%
import numpy as np

from hellgan.nn_core import (
    GeneratorParams, Mode, disc_backward, disc_forward, gen_forward, init_params, pack, unpack,
    zero_net,
)

# %% [markdown]
# The all-zero net is the neutral point: every input scores exactly 0.5.

# %%
print("zero net, probability mode:", disc_forward(zero_net(), [-3.0, 0.0, 10.0]))
print("zero net, critic mode:     ", disc_forward(zero_net(Mode.CRITIC), [-3.0, 0.0, 10.0]))

# %% [markdown]
# A seeded fan-in initialisation gives a generic net.  Forward passes are
# vectorised over inputs, and `disc_backward` returns the gradient with respect
# to all 16 parameters plus the input derivative.

# %%
net = init_params(seed=11)
xs = np.linspace(6, 14, 5)
print("D(x) on a grid:", np.round(disc_forward(net, xs), 4))
g = disc_backward(net, 10.0)
print("dD/dalpha at x=10:", np.round(g.d_alpha, 4))
print("dD/dx at x=10:", round(float(g.d_input), 6))

# %% [markdown]
# Central differences agree with the analytic gradient to roughly 1e-10.

# %%
alpha = pack(net)
fd = np.empty(16)
for i in range(16):
    e = np.zeros(16)
    e[i] = 1e-6
    fd[i] = (disc_forward(unpack(alpha + e), 10.0) - disc_forward(unpack(alpha - e), 10.0)) / 2e-6
print("max |analytic - FD| =", np.abs(g.d_alpha - fd).max())

# %% [markdown]
# Critic mode drops the sigmoid, so the critic output is the logit of the probability.

# %%
p = disc_forward(net, 9.0)
s = disc_forward(net.with_mode(Mode.CRITIC), 9.0)
print(f"logit(D) = {np.log(p / (1 - p)):.12f}, critic = {s:.12f}")

# %% [markdown]
# The generator is the location-scale map `sigma * z + mu`.

# %%
theta = GeneratorParams(10.0, 1.5)
print("G(z) for z = -1, 0, 2:", gen_forward(theta, np.array([-1.0, 0.0, 2.0])))
