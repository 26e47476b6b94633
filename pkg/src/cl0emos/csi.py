"""Clear-sky index normalisation and back-transformation of predictive quantiles."""
from dataclasses import dataclass, replace

import numpy as np

from . import dist

CSI_EPS = 5.0  # W/m^2; below this clear-sky irradiance no normalisation is applied


@dataclass(frozen=True)
class QuantileForecast:
    levels: np.ndarray
    values: np.ndarray  # (..., n_levels)

    def __post_init__(self):
        if np.any(np.diff(self.levels) <= 0):
            raise ValueError("quantile levels must be strictly increasing")
        if np.shape(self.values)[-1] != len(self.levels):
            raise ValueError("values and levels differ in length")


def equidistant_levels(n=100):
    return np.arange(1, n + 1) / (n + 1)


def csi_mask(clear_sky, eps=CSI_EPS):
    """True where the case is normalised; missing clear-sky raises."""
    cs = np.asarray(clear_sky, dtype=float)
    if np.any(np.isnan(cs)):
        raise ValueError("clear_sky is missing for a CSI-mode case")
    return cs > eps


def to_csi(cases, eps=CSI_EPS):
    """Divide members and observations by clear-sky irradiance.

    Works on a ForecastCase or an Archive. Returns ``(normalised, flag)`` where
    ``flag`` marks cases passed through unchanged because clear-sky was at or
    below ``eps``.
    """
    ok = csi_mask(cases.clear_sky, eps)
    div = np.where(ok, cases.clear_sky, 1.0)
    members = cases.members / (div[..., None] if np.ndim(div) else div)
    obs = cases.observation / div
    if np.ndim(div) == 0:
        return replace(cases, members=members, observation=float(obs)), not bool(ok)
    out = cases.take(np.arange(len(cases)))
    out.members, out.observation = members, obs
    return out, ~ok


def from_csi(values, clear_sky, flag=False):
    """Inverse of :func:`to_csi` for values in CSI space."""
    return np.where(flag, values, np.asarray(values) * clear_sky)


def csi_quantiles_to_irradiance(params, clear_sky, n_levels=100, flag=False):
    """Equidistant CSI quantiles scaled back to irradiance.

    ``params`` may be vectorised over N cases, in which case ``values`` has
    shape (N, n_levels).
    """
    cs = np.asarray(clear_sky, dtype=float)
    if np.any(cs < 0):
        raise ValueError("clear_sky must be non-negative")
    levels = equidistant_levels(n_levels)
    mu, sigma = np.broadcast_arrays(params.mu, params.sigma)
    q = dist.quantile(dist.Cl0Params(mu[..., None], sigma[..., None]), levels)
    scale = np.where(flag, 1.0, cs)
    values = q * np.asarray(scale)[..., None]
    return QuantileForecast(levels, values)
