"""
CL0-EMOS: link functions from ensemble statistics to CL0 parameters and
coefficient estimation by minimum mean CRPS.

The location is linked linearly to (group) ensemble means and the fraction
of zero members, optionally after removing harmonic seasonal fits; the scale
is ``exp(beta0 + beta1 * log S^2)``.
"""
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize

from . import dist
from .data import GroupSpec, compute_stats
from .dist import SIGMA_FLOOR, Cl0Params
from .seasonal import HarmonicFit, day_index, fit_harmonic, predict_harmonic

VAR_EPS = 1e-6
KINDS = ("simple", "simple_exchangeable", "periodic_exchangeable_1", "periodic_exchangeable_2")
ALIASES = {"periodic1": "periodic_exchangeable_1", "periodic2": "periodic_exchangeable_2",
           "exchangeable": "simple_exchangeable"}
# location used for all-zero windows; point mass at zero is 1 to double precision
NIGHT_MU = -10.0 * SIGMA_FLOOR * 1e3


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class LinkVariant:
    kind: str
    group_spec: GroupSpec

    def __post_init__(self):
        kind = ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ModelError(f"unknown link variant {self.kind!r}; choose from {KINDS}")
        object.__setattr__(self, "kind", kind)

    @property
    def harmonic_order(self):
        return {"periodic_exchangeable_1": 1, "periodic_exchangeable_2": 2}.get(self.kind, 0)

    @property
    def periodic(self):
        return self.harmonic_order > 0

    @property
    def groups(self):
        """Groups whose means enter the location link (singletons for ``simple``)."""
        if self.kind == "simple":
            return GroupSpec.singletons(self.group_spec.n_members)
        return self.group_spec

    @property
    def n_link(self):
        # alpha_0..alpha_K, nu, beta0, beta1
        return self.groups.n_groups + 4

    @property
    def parameter_count(self):
        n = self.n_link
        if self.periodic:
            # one harmonic for the observations plus one per group mean
            n += (self.groups.n_groups + 1) * (2 * self.harmonic_order + 1)
        return n

    def stats(self, members):
        return compute_stats(members, self.groups)


@dataclass(frozen=True)
class EmosCoefficients:
    alpha: np.ndarray  # alpha_0 .. alpha_K
    nu: float
    beta0: float
    beta1: float
    harmonic_obs: HarmonicFit = None
    harmonic_groups: tuple = None

    @property
    def vector(self):
        return np.concatenate([self.alpha, [self.nu, self.beta0, self.beta1]])

    @classmethod
    def from_vector(cls, theta, harmonic_obs=None, harmonic_groups=None):
        theta = np.asarray(theta, dtype=float)
        return cls(theta[:-3].copy(), float(theta[-3]), float(theta[-2]), float(theta[-1]),
                   harmonic_obs, harmonic_groups)

    def with_harmonics(self, harmonic_obs, harmonic_groups):
        return EmosCoefficients(self.alpha, self.nu, self.beta0, self.beta1, harmonic_obs,
                                None if harmonic_groups is None else tuple(harmonic_groups))

    def to_dict(self):
        d = {"alpha": [float(a) for a in self.alpha], "nu": self.nu,
             "beta0": self.beta0, "beta1": self.beta1}
        if self.harmonic_obs is not None:
            d["harmonic_obs"] = self.harmonic_obs.to_dict()
            d["harmonic_groups"] = [h.to_dict() for h in self.harmonic_groups]
        return d

    @classmethod
    def from_dict(cls, d):
        ho = d.get("harmonic_obs")
        return cls(np.array(d["alpha"], dtype=float), float(d["nu"]), float(d["beta0"]),
                   float(d["beta1"]),
                   None if ho is None else HarmonicFit.from_dict(ho),
                   None if ho is None else tuple(HarmonicFit.from_dict(h) for h in d["harmonic_groups"]))


@dataclass
class FitDiagnostics:
    n_cases: int = 0
    n_iter: int = 0
    n_eval: int = 0
    n_restarts: int = 0
    converged: bool = True
    degenerate: bool = False
    initial_objective: float = np.nan
    objective: float = np.nan

    def to_dict(self):
        return asdict(self)


def _scale(beta0, beta1, variance):
    expo = beta0 + beta1 * np.log(np.asarray(variance) + VAR_EPS)
    return np.maximum(np.exp(np.clip(expo, -700.0, 700.0)), SIGMA_FLOOR)


def _location_design(coefs, variant, stats, t):
    """Return (offset, design) with mu = offset + design @ [alpha, nu]."""
    gm = np.atleast_2d(stats.group_means)
    if variant.periodic:
        if coefs.harmonic_obs is None or coefs.harmonic_groups is None:
            raise ModelError("periodic link needs harmonic fits for observations and group means")
        t = np.broadcast_to(np.asarray(t, dtype=float), (gm.shape[0],))
        offset = predict_harmonic(coefs.harmonic_obs, t)
        gm = gm - np.stack([predict_harmonic(h, t) for h in coefs.harmonic_groups], axis=1)
    else:
        offset = np.zeros(gm.shape[0])
    X = np.column_stack([np.ones(gm.shape[0]), gm, np.atleast_1d(stats.zero_fraction)])
    return offset, X


def link(coefs, variant, stats, t=None):
    """Map ensemble statistics to CL0 parameters (vectorised over cases)."""
    scalar = np.ndim(stats.overall_mean) == 0
    offset, X = _location_design(coefs, variant, stats, t)
    mu = offset + X @ np.concatenate([coefs.alpha, [coefs.nu]])
    sigma = _scale(coefs.beta0, coefs.beta1, np.atleast_1d(stats.variance))
    if scalar:
        return Cl0Params(mu[0], sigma[0])
    return Cl0Params(mu, sigma)


def night_coefficients(variant):
    k = variant.groups.n_groups
    return EmosCoefficients(np.r_[NIGHT_MU, np.zeros(k)], 0.0, float(np.log(SIGMA_FLOOR)), 0.0)


def default_init(variant, obs):
    sizes = variant.groups.sizes
    alpha = np.r_[0.0, sizes / sizes.sum()]
    beta0 = float(np.log(np.std(obs) + SIGMA_FLOOR))
    return EmosCoefficients(alpha, 0.0, beta0, 0.5)


def _simplex_steps(variant, obs):
    k = variant.groups.n_groups
    spread = float(np.std(obs)) + 1.0
    return np.r_[0.1 * spread, np.full(k, 0.1), 0.1 * spread, 0.5, 0.1]


class _Objective:
    """Mean CRPS of the link over a fixed training set, as a function of the coefficient vector."""

    def __init__(self, offset, X, log_var, obs):
        self.offset, self.X, self.log_var, self.obs = offset, X, log_var, obs
        self.n_loc = X.shape[1]

    def params(self, theta):
        mu = self.offset + self.X @ theta[:self.n_loc]
        expo = np.clip(theta[-2] + theta[-1] * self.log_var, -700.0, 700.0)
        return Cl0Params(mu, np.maximum(np.exp(expo), SIGMA_FLOOR))

    def __call__(self, theta):
        if not np.all(np.isfinite(theta)):
            return np.inf
        try:
            val = float(np.mean(dist.crps(self.params(theta), self.obs)))
        except ValueError:
            return np.inf
        return val if np.isfinite(val) else np.inf


def _axis_simplex(x0, steps):
    sim = np.tile(x0, (len(x0) + 1, 1))
    sim[1:] += np.diag(steps)
    return sim


def minimize_simplex(fun, x0, steps, xtol=1e-8, ftol=1e-8, maxiter=None, max_restarts=3):
    """Nelder-Mead with axis-aligned restarts from the incumbent.

    Each restart rebuilds a fresh coordinate simplex around the best point,
    which guards against premature simplex collapse. Stops once a restart
    improves the objective by no more than ``ftol``.
    """
    x0 = np.asarray(x0, dtype=float)
    maxiter = maxiter or 500 * len(x0)
    best_x, best_f = x0, fun(x0)
    nit = nfev = 0
    converged = False
    restarts = 0
    scale = 1.0
    for restarts in range(max_restarts + 1):
        res = minimize(fun, best_x, method="Nelder-Mead",
                       options={"initial_simplex": _axis_simplex(best_x, steps * scale),
                                "xatol": xtol, "fatol": ftol, "maxiter": maxiter,
                                "maxfev": 2 * maxiter})
        nit += res.nit
        nfev += res.nfev
        converged = bool(res.success)
        gain = best_f - res.fun
        if res.fun < best_f:
            best_x, best_f = res.x, res.fun
        if converged and gain <= ftol:
            break
        scale *= 0.5
    return best_x, best_f, {"n_iter": nit, "n_eval": nfev, "n_restarts": restarts,
                            "converged": converged}


def estimate(variant, stats, t, obs, init=None, xtol=1e-8, ftol=1e-8, maxiter=None,
             max_restarts=3):
    """Fit coefficients by minimising mean CRPS over a training set.

    Parameters
    ----------
    variant : LinkVariant
    stats : EnsembleStats
        Statistics of the training ensembles, computed with ``variant.groups``.
    t : array_like
        Day index of each training case's valid time (used by periodic links).
    obs : array_like
        Non-negative verifying observations.
    init : EmosCoefficients, optional
        Warm start; defaults to :func:`default_init`.

    Returns
    -------
    coefs : EmosCoefficients
    diag : FitDiagnostics
    """
    obs = np.asarray(obs, dtype=float)
    if len(obs) == 0:
        raise ModelError("empty training set")
    if np.any(~np.isfinite(obs)) or np.any(obs < 0):
        raise ModelError("training observations must be finite and non-negative")
    t = np.broadcast_to(np.asarray(0.0 if t is None else t, dtype=float), obs.shape)

    if np.all(obs <= 0) and np.all(stats.overall_mean <= 0) and np.all(stats.variance <= 0):
        return night_coefficients(variant), FitDiagnostics(n_cases=len(obs), degenerate=True,
                                                          objective=0.0, initial_objective=0.0)

    harm_obs = harm_groups = None
    if variant.periodic:
        order = variant.harmonic_order
        harm_obs = fit_harmonic(t, obs, order)
        harm_groups = tuple(fit_harmonic(t, stats.group_means[:, k], order)
                            for k in range(stats.group_means.shape[1]))

    if init is None or len(init.alpha) != variant.groups.n_groups + 1:
        init = default_init(variant, obs)
    init = init.with_harmonics(harm_obs, harm_groups)
    offset, X = _location_design(init, variant, stats, t)
    objective = _Objective(offset, X, np.log(stats.variance + VAR_EPS), obs)

    x0 = init.vector
    f0 = objective(x0)
    if not np.isfinite(f0):
        x0 = default_init(variant, obs).vector
        f0 = objective(x0)
    x, fx, info = minimize_simplex(objective, x0, _simplex_steps(variant, obs), xtol=xtol,
                                   ftol=ftol, maxiter=maxiter, max_restarts=max_restarts)
    coefs = EmosCoefficients.from_vector(x, harm_obs, harm_groups)
    diag = FitDiagnostics(n_cases=len(obs), initial_objective=f0, objective=fx, **info)
    return coefs, diag


def predict(coefs, variant, cases):
    """Predictive CL0 parameters for a ForecastCase or an Archive."""
    members = np.atleast_2d(cases.members)
    stats = variant.stats(members)
    t = day_index(np.atleast_1d(cases.valid_time))
    params = link(coefs, variant, stats, t)
    if np.ndim(cases.members) == 1:
        return params[0]
    return params
