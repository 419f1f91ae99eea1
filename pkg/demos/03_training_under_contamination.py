# %% [markdown]
# # Fitting N(mu, sigma^2) adversarially, with and without outliers
#
# The data are N(10, 1.5^2), and a fraction eps of them is replaced by N(0, 1) draws.
# Each loss is trained by alternating Adam steps: ascent on the discriminator
# and descent on (mu, log sigma).  Epoch records report the error against the
# clean parameters.  The sizes below are small so the script finishes in
# under a minute.

# %%
from hellgan.experiments import select_best_epoch
from hellgan.losses import APPROX_HD, CLASSICAL_GAN, WGAN, LossKind
from hellgan.measures import sample_contaminated
from hellgan.nn_core import GeneratorParams, init_params
from hellgan.optim import TrainConfig, default_theta0, train

star = GeneratorParams(10.0, 1.5)
cfg = TrainConfig(epochs=60, batch_size=500, seed=3, kde_nodes=4)
kinds = [CLASSICAL_GAN, WGAN, APPROX_HD, LossKind.parse("hd_kde", 0.5)]

# %%
for eps in (0.0, 0.1):
    data = sample_contaminated(5000, 10.0, 1.5, eps, seed=7)
    theta0 = default_theta0(data)   # sample median and unit scale
    print(f"\neps = {eps}: start at mu={theta0.mu:.3f}, sigma={theta0.sigma:.3f}")
    for kind in kinds:
        trace = train(cfg, kind, data, theta0, init_params(5, mode=kind.mode), star)
        ep, (mm, ms, r) = select_best_epoch(trace, star)
        th = trace.theta_hat
        print(f"  {kind.label:>10}: final mu={th.mu:7.3f} sigma={th.sigma:6.3f} | "
              f"best epoch {ep:3d} rmsec={r:.4f}")

# %% [markdown]
# The best-epoch metric rewards any run that passes close to the truth at some
# point.  The median start is already robust, so at high eps many runs score
# best at epoch 1.
