"""
Working in clear-sky-index space
================================

Dividing by clear-sky irradiance removes most of the diurnal cycle. The
model is fitted to the ratio and 100 equidistant quantiles are scaled back
to W/m^2 for scoring.
"""
# %%
import numpy as np

from cl0emos import dist
from cl0emos.csi import csi_quantiles_to_irradiance, to_csi
from cl0emos.data import ForecastCase
from cl0emos.dist import Cl0Params
from cl0emos.verify import crps_empirical

case = ForecastCase("ST01", np.datetime64("2020-06-01T00:00"), 720,
                    np.array([300.0, 420.0, 510.0]), observation=450.0, clear_sky=800.0)
normalised, passed_through = to_csi(case)
print("CSI members:", normalised.members, "obs:", normalised.observation, "flag:", passed_through)

# %%
# Suppose the CSI model predicts CL0(0.55, 0.08).
qf = csi_quantiles_to_irradiance(Cl0Params(0.55, 0.08), case.clear_sky)
print("levels", qf.levels[[0, 49, 99]].round(4), "->", qf.values[[0, 49, 99]].round(1), "W/m^2")

# %%
# The 100-quantile forecast scores almost like the exact scaled distribution.
exact = float(dist.crps(Cl0Params(0.55 * 800, 0.08 * 800), case.observation))
approx = float(crps_empirical(qf.values, case.observation))
print(f"exact CRPS {exact:.3f}  100-quantile CRPS {approx:.3f}")
