"""
Logistic distribution left-censored at zero (CL0).

All probability mass that a logistic distribution with location ``mu`` and
scale ``sigma`` places below zero is moved to a point mass at exactly zero.
Functions accept scalars or numpy arrays and broadcast in the usual way.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

SIGMA_FLOOR = 1e-6


def _softplus(x):
    # log(1 + exp(x)) without overflow
    return np.logaddexp(0.0, x)


@dataclass(frozen=True)
class Cl0Params:
    """Location ``mu`` and scale ``sigma`` (both W/m^2) of a CL0 distribution.

    Either field may be an array; they are broadcast against each other.
    Scales below :data:`SIGMA_FLOOR` are rejected.
    """

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        if not np.all(np.isfinite(mu)):
            raise ValueError("mu must be finite")
        if not np.all(sigma >= SIGMA_FLOOR):
            raise ValueError(f"sigma must be >= {SIGMA_FLOOR}, got min {np.min(sigma)}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    def __getitem__(self, idx):
        mu, sigma = np.broadcast_arrays(self.mu, self.sigma)
        return Cl0Params(mu[idx], sigma[idx])

    def __len__(self):
        return np.broadcast(self.mu, self.sigma).shape[0]

    @property
    def point_mass(self):
        """Probability of exactly zero, ``G(0) = 1 / (1 + exp(mu / sigma))``."""
        return expit(-self.mu / self.sigma)


def cdf(params, x):
    return _cdf(params.mu, params.sigma, np.asarray(x, dtype=float))


def pdf(params, x):
    """Generalized density: point mass ``G(0)`` at zero, logistic density above."""
    x = np.asarray(x, dtype=float)
    z = (x - params.mu) / params.sigma
    # g(x) = expit(z) * expit(-z) / sigma, symmetric and overflow free
    dens = expit(z) * expit(-z) / params.sigma
    out = np.where(x > 0, dens, 0.0)
    return np.where(x == 0, params.point_mass, out)


def quantile(params, p):
    """Quantile function; zero whenever ``p <= G(0)``.

    Raises
    ------
    ValueError
        If any ``p`` lies outside the open interval (0, 1).
    """
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0) & (p < 1))):
        raise ValueError("quantile levels must lie in (0, 1)")
    mu, sigma, p = np.broadcast_arrays(params.mu, params.sigma, p)
    q = np.asarray(np.maximum(mu + sigma * logit(p), 0.0))
    # Return the smallest double q with cdf(q) >= p, so the generalized-inverse
    # relations with cdf hold exactly in floating point. The closed form is
    # usually already there; repair the rest by bracketing and bisection.
    below = np.nextafter(q, -np.inf)
    ok = (_cdf(mu, sigma, q) >= p) & ((q == 0) | (_cdf(mu, sigma, below) < p))
    if not np.all(ok):
        bad = np.flatnonzero(~ok)
        q = q.copy()
        q.flat[bad] = _refine(mu.flat[bad], sigma.flat[bad], p.flat[bad], q.flat[bad])
    return q[()]


def _cdf(mu, sigma, x):
    return np.where(x < 0, 0.0, np.clip(expit((x - mu) / sigma), 0.0, 1.0))


def _refine(mu, sigma, p, q):
    tiny = np.finfo(float).eps
    step = np.maximum(tiny * np.maximum(np.abs(q), sigma), np.finfo(float).tiny)
    hi = q.copy()
    while True:
        short = _cdf(mu, sigma, hi) < p
        if not np.any(short):
            break
        hi = np.where(short, hi + step, hi)
        step = np.where(short, 2 * step, step)
    step = np.maximum(tiny * np.maximum(np.abs(q), sigma), np.finfo(float).tiny)
    lo = np.nextafter(hi, -np.inf)
    while True:
        long = (lo > 0) & (_cdf(mu, sigma, lo) >= p)
        if not np.any(long):
            break
        lo = np.where(long, np.maximum(lo - step, 0.0), lo)
        step = np.where(long, 2 * step, step)
    # lo == 0 with cdf(0) >= p means the point mass already covers p
    at_zero = (lo <= 0) & (_cdf(mu, sigma, np.zeros_like(lo)) >= p)
    hi = np.where(at_zero, 0.0, hi)
    lo = np.where(at_zero, -1.0, lo)
    # invariant: cdf(lo) < p <= cdf(hi)
    for _ in range(200):
        mid = lo + 0.5 * (hi - lo)
        active = (mid > lo) & (mid < hi)
        if not np.any(active):
            break
        up = _cdf(mu, sigma, mid) >= p
        hi = np.where(active & up, mid, hi)
        lo = np.where(active & ~up, mid, lo)
    return hi


def mean(params):
    # mu + sigma*log(1 + exp(-mu/sigma)) rewritten as sigma*softplus(mu/sigma)
    return params.sigma * _softplus(params.mu / params.sigma)


def median(params):
    return quantile(params, 0.5)


def crps(params, y):
    """Closed-form CRPS of the CL0 distribution against observations ``y >= 0``.

    With ``z = (y - mu) / sigma`` and ``m = mu / sigma``::

        CRPS = sigma * (|z| + 2 softplus(-|z|) - 1)
               - sigma * (softplus(-m) - expit(-m))

    The first term is the CRPS of the uncensored logistic, the second removes
    the contribution of the censored lower tail.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("observations must be non-negative")
    sigma = params.sigma
    z = (y - params.mu) / sigma
    az = np.abs(z)
    m = params.mu / sigma
    logis = az + 2.0 * _softplus(-az) - 1.0
    censor = _softplus(-m) - expit(-m)
    out = sigma * (logis - censor)
    return np.maximum(out, 0.0)


def sample(params, n, seed):
    """Draw ``n`` values by inversion of a seeded uniform stream.

    The output shape is the params shape broadcast against ``(n,)``, so column
    params of shape ``(N, 1)`` give an ``(N, n)`` array of simulated ensembles.
    ``n == 0`` gives an empty array.
    """
    if n == 0:
        return np.zeros(0)
    rng = np.random.default_rng(seed)
    u = rng.random(np.broadcast_shapes(params.mu.shape, params.sigma.shape, (n,)))
    # rng.random() is in [0, 1); map an exact 0 to the smallest positive double
    u = np.where(u == 0.0, np.finfo(float).tiny, u)
    return np.maximum(params.mu + params.sigma * logit(u), 0.0)
