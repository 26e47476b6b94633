"""
Fitting an exchangeable EMOS model
==================================

An 11-member ensemble with one control run and ten exchangeable perturbed
runs. The raw members are biased high and too narrow; a CL0-EMOS model is
fitted by minimising the mean CRPS and compared with the raw ensemble.
"""
# %%
import numpy as np

from cl0emos import dist
from cl0emos.data import GroupSpec
from cl0emos.emos import LinkVariant, estimate, link
from cl0emos.verify import crps_empirical, ks_uniform, pit, skill_score

rng = np.random.default_rng(0)
groups = GroupSpec(("control", "perturbed"), ((0,), tuple(range(1, 11))))
variant = LinkVariant("simple_exchangeable", groups)
print("parameters to estimate:", variant.parameter_count)

# %%
def simulate(n):
    signal = rng.uniform(0, 800, n) * (rng.random(n) > 0.25)
    obs = np.maximum(0.0, signal + (5 + 0.1 * signal) * rng.logistic(size=n))
    members = np.maximum(0.0, 1.2 * signal[:, None] + (2 + 0.05 * signal[:, None]) * rng.logistic(size=(n, 11)))
    return members, obs

train_members, train_obs = simulate(1500)
test_members, test_obs = simulate(3000)

coefs, diag = estimate(variant, variant.stats(train_members), None, train_obs)
print("alpha:", coefs.alpha.round(3), "nu:", round(coefs.nu, 3),
      "beta:", round(coefs.beta0, 3), round(coefs.beta1, 3))
print("objective", round(diag.initial_objective, 2), "->", round(diag.objective, 2),
      "in", diag.n_iter, "iterations")

# %%
params = link(coefs, variant, variant.stats(test_members))
crps_pp = dist.crps(params, test_obs).mean()
crps_raw = crps_empirical(test_members, test_obs).mean()
print(f"CRPS raw {crps_raw:.2f}  post-processed {crps_pp:.2f}  CRPSS {skill_score(crps_pp, crps_raw):.3f}")
print("PIT Kolmogorov distance:", round(ks_uniform(pit(params, test_obs, seed=1)), 4))
