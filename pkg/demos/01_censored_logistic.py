"""
The zero-censored logistic distribution
=======================================

Irradiance cannot be negative, so the predictive distribution puts the
logistic mass that falls below zero into a point mass at exactly zero.
This script walks through the basic quantities.
"""
# %%
import numpy as np

from cl0emos import dist
from cl0emos.dist import Cl0Params

# A cloudy-morning forecast: location just above zero, moderate scale.
p = Cl0Params(mu=40.0, sigma=25.0)
print("P(Y = 0)        =", round(float(p.point_mass), 4))
print("mean            =", round(float(dist.mean(p)), 3))
print("median          =", float(dist.median(p)))
print("5%/95% quantile =", dist.quantile(p, [0.05, 0.95]))

# %%
# Quantiles below the point mass are exactly zero.
levels = np.array([0.05, 0.1, 0.15, 0.2, 0.5])
print(np.c_[levels, dist.quantile(p, levels)])

# %%
# The closed-form CRPS is cheap and vectorised. An observation of zero is
# penalised less when the forecast puts more mass at zero.
mus = np.array([-30.0, 0.0, 40.0, 200.0])
print("CRPS at y=0:", dist.crps(Cl0Params(mus, 25.0), 0.0).round(3))

# %%
# Sampling by inversion reproduces the closed-form mean.
draws = dist.sample(p, 200_000, seed=1)
print("Monte Carlo mean:", draws.mean().round(3), " share of zeros:", (draws == 0).mean().round(4))
