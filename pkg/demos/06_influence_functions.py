# %% [markdown]
# # Influence functions and the population oracle
#
# Contaminating the model density with a small mass eps of `h` moves the
# saddle point.  Differentiating the two stationarity equations in eps gives
# a linear system for IF(theta) and IF(alpha).  Its blocks are integrals
# against the model and the contaminant, evaluated here by 64-node
# Gauss-Hermite quadrature.

# %%
import numpy as np

from hellgan.inference import (
    ContaminantSpec, influence_functions, join, population_gradient, population_minimax,
)
from hellgan.measures import derive_seed, gauss_hermite_rule
from hellgan.nn_core import GeneratorParams, init_params, pack, unpack

rule = gauss_hermite_rule(64)
theta0 = GeneratorParams(10.0, 1.5)
h = ContaminantSpec.gaussian(0.0, 1.0)

# %% [markdown]
# At a smooth discriminator centred on the data, the system is well posed.
# The solver reports its relative residual.  When the contaminant equals the
# model itself, every forcing term vanishes and so does the IF.

# %%
a = np.random.default_rng(3).normal(scale=0.15, size=16)
a[5:10] = -a[0:5] * 10.0
net = unpack(a)
res = influence_functions(theta0, net, h, rule)
print("IF(theta), h = N(0,1):", res.if_theta, " residual", res.residual)
print("IF(theta), h = model: ", influence_functions(theta0, net, ContaminantSpec.gaussian(10, 1.5),
                                                     rule).if_theta)
print("IF(theta), point mass at 14:",
      influence_functions(theta0, net, ContaminantSpec.point_mass(14.0), rule).if_theta)

# %% [markdown]
# The population objective is also a mean of squared differences of square
# roots, so it never exceeds 1.  A discriminator that is constant at 0 or at 1
# attains that bound for any generator, which means the inner supremum cannot
# tell generators apart.  The population minimax therefore drifts towards a
# saturated net, and theta ends up wherever the gradient dies out.

# %%
for mu, sg in ((10.0, 1.5), (4.0, 9.0)):
    sat = np.zeros(16)
    sat[15] = 30.0
    v, _ = population_gradient(join(GeneratorParams(mu, sg), unpack(sat)), 0.0, h, rule, theta0)
    print(f"saturated D at theta=({mu}, {sg}): value {v:.12f}")

th, alpha = population_minimax(0.0, h, rule, theta0,
                               net_init=init_params(derive_seed(20240101, "oracle"),
                                                    "uniform_small"))
print(f"population oracle at eps=0: theta=({th.mu:.3f}, {th.sigma:.3f}), "
      f"output bias {pack(alpha)[15]:.2f}")
