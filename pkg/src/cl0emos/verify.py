"""
Forecast verification: proper scores, skill scores, calibration diagnostics,
stationary-bootstrap confidence intervals and a climatological reference.

Ensemble arguments are arrays of shape (N, M) (or (M,) for one case) and may
contain NaN padding, which is ignored.
"""
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats as sps

from . import dist

SS_EPS = 1e-6


def crps_parametric(params, y):
    return dist.crps(params, y)


def _sorted_members(members):
    x = np.sort(np.atleast_2d(np.asarray(members, dtype=float)), axis=1)
    m = np.sum(~np.isnan(x), axis=1)
    if np.any(m == 0):
        raise ValueError("ensemble has no members")
    return x, m


def crps_empirical(members, y):
    """CRPS of the empirical distribution of ``members``.

    ``mean|x_i - y| - 0.5 * mean|x_i - x_j|``, using the sorted-sample identity
    for the double sum so the cost is O(M log M).
    """
    scalar = np.ndim(members) == 1
    x, m = _sorted_members(members)
    y = np.asarray(y, dtype=float).reshape(-1, 1)
    i = np.arange(1, x.shape[1] + 1)
    w = np.where(i <= m[:, None], 2 * i - m[:, None] - 1, 0)
    xf = np.where(np.isnan(x), 0.0, x)
    abs_err = np.nansum(np.abs(x - y), axis=1) / m
    spread = np.sum(w * xf, axis=1) / m**2  # = 0.5 * mean|x_i - x_j|
    out = np.maximum(abs_err - spread, 0.0)
    return out[0] if scalar else out


def ecdf(members, z):
    """Empirical CDF of each ensemble at threshold(s) ``z``."""
    x = np.atleast_2d(np.asarray(members, dtype=float))
    m = np.sum(~np.isnan(x), axis=1)
    z = np.asarray(z, dtype=float)
    if z.ndim:
        z = z.reshape(-1, 1)
    return np.sum(x <= z, axis=1) / m


def brier(f_at_z, y, z):
    """Brier score ``(F(z) - 1{z >= y})^2``."""
    f = np.asarray(f_at_z, dtype=float)
    if np.any((f < 0) | (f > 1)):
        raise ValueError("forecast probabilities must lie in [0, 1]")
    return (f - (np.asarray(z) >= np.asarray(y)).astype(float)) ** 2


def skill_score(mean_score, mean_ref, eps=SS_EPS):
    """``1 - mean_score / mean_ref``; NaN (undefined) when ``mean_ref <= eps``."""
    if not np.isfinite(mean_ref) or mean_ref <= eps:
        return np.nan
    return 1.0 - mean_score / mean_ref


def pit(params, y, seed=None):
    """Randomised PIT: ``F(y)`` for ``y > 0``, uniform on ``[0, F(0)]`` at ``y = 0``."""
    rng = np.random.default_rng(seed)
    y = np.asarray(y, dtype=float)
    u = rng.random(np.broadcast(params.mu, params.sigma, y).shape)
    return np.where(y > 0, dist.cdf(params, y), u * params.point_mass)


def pit_empirical(members, y, seed=None):
    """Randomised PIT of an ensemble's empirical CDF."""
    rng = np.random.default_rng(seed)
    x, m = _sorted_members(members)
    y = np.asarray(y, dtype=float).reshape(-1, 1)
    below = np.sum(x < y, axis=1)
    ties = np.sum(x == y, axis=1)
    return (below + rng.random(len(m)) * ties) / m


def rank(members, y, seed=None):
    """Rank of ``y`` within the ensemble, in ``1..M+1``; ties broken uniformly at random."""
    scalar = np.ndim(members) == 1
    rng = np.random.default_rng(seed)
    x = np.atleast_2d(np.asarray(members, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1, 1)
    below = np.sum(x < y, axis=1)
    ties = np.sum(x == y, axis=1)
    r = 1 + below + np.floor(rng.random(len(x)) * (ties + 1)).astype(int)
    return int(r[0]) if scalar else r


def nominal_coverage(n_members):
    """Nominal coverage (percent) of an ``n_members`` ensemble range."""
    return (n_members - 1) / (n_members + 1) * 100.0


def alpha_for_members(n_members):
    return 2.0 / (n_members + 1)


def interval_parametric(params, alpha):
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return dist.quantile(params, alpha / 2), dist.quantile(params, 1 - alpha / 2)


def interval_quantiles(values, levels, alpha):
    """Central interval of a quantile forecast by linear interpolation in level."""
    v = np.atleast_2d(values)
    lo = np.array([np.interp(alpha / 2, levels, row) for row in v])
    hi = np.array([np.interp(1 - alpha / 2, levels, row) for row in v])
    return lo, hi


def interval_ensemble(members):
    return np.nanmin(members, axis=-1), np.nanmax(members, axis=-1)


def coverage(lower, upper, y):
    """Indicator that ``y`` falls inside the closed interval ``[lower, upper]``."""
    y = np.asarray(y)
    return (np.asarray(lower) <= y) & (y <= np.asarray(upper))


def mae_rmse(point_forecasts, observations):
    f = np.asarray(point_forecasts, dtype=float)
    y = np.asarray(observations, dtype=float)
    if f.shape != y.shape or f.size == 0:
        raise ValueError("forecasts and observations must be non-empty and of equal length")
    err = f - y
    return float(np.mean(np.abs(err))), float(np.sqrt(np.mean(err**2)))


def ks_uniform(values):
    """Kolmogorov distance between the sample's empirical CDF and U(0, 1)."""
    return float(sps.kstest(np.asarray(values), "uniform").statistic)


# --- stationary bootstrap -------------------------------------------------

def default_block_length(n):
    return float(np.ceil(n ** (1.0 / 3.0)))


def stationary_bootstrap_indices(n, n_boot, mean_block_len, rng):
    """Index matrix (n_boot, n) of the stationary bootstrap with wrap-around.

    Blocks start at uniform positions and have geometric lengths with the
    given mean.
    """
    if mean_block_len < 1:
        raise ValueError("mean block length must be >= 1")
    p = 1.0 / mean_block_len
    idx = np.empty((n_boot, n), dtype=np.int64)
    starts = rng.integers(0, n, size=(n_boot, n))
    new_block = rng.random((n_boot, n)) < p
    idx[:, 0] = starts[:, 0]
    for t in range(1, n):
        idx[:, t] = np.where(new_block[:, t], starts[:, t], (idx[:, t - 1] + 1) % n)
    return idx


def bootstrap_ci(score_f, score_ref, n_boot=2000, mean_block_len=None, seed=0, level=0.95):
    """Percentile confidence interval of the skill score from a stationary bootstrap.

    Parameters
    ----------
    score_f, score_ref : array_like
        Time-ordered per-case scores of the forecast and the reference.
    n_boot : int
        Number of bootstrap replicates.
    mean_block_len : float, optional
        Mean block length; defaults to ``ceil(n ** (1/3))``.

    Returns
    -------
    (low, high) : tuple of float
        NaN when the reference is degenerate (all scores ~0).
    """
    sf = np.asarray(score_f, dtype=float)
    sr = np.asarray(score_ref, dtype=float)
    n = len(sf)
    if n < 10 or len(sr) != n:
        raise ValueError("need at least 10 paired scores")
    if np.mean(sr) <= SS_EPS:
        return np.nan, np.nan
    L = default_block_length(n) if mean_block_len is None else mean_block_len
    rng = np.random.default_rng(seed)
    idx = stationary_bootstrap_indices(n, n_boot, L, rng)
    mr = sr[idx].mean(axis=1)
    mf = sf[idx].mean(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ss = np.where(mr > SS_EPS, 1.0 - mf / mr, np.nan)
    ss = ss[np.isfinite(ss)]
    if len(ss) == 0:
        return np.nan, np.nan
    a = (1 - level) / 2
    lo, hi = np.percentile(ss, [100 * a, 100 * (1 - a)])
    return float(lo), float(hi)


# --- climatological reference ---------------------------------------------

def climatology_reference(archive, window_days, rows=None):
    """Past-observation ensembles for each case in ``archive`` (or ``rows`` of it).

    For a case valid at time ``v`` at station ``s``, the ensemble holds the
    observations at ``s`` valid at ``v - d days`` for ``d = 1..window_days``.
    Returns an (N, window_days) array padded with NaN where observations are
    missing.

    Raises
    ------
    ValueError
        If some case has an empty window.
    """
    rows = np.arange(len(archive)) if rows is None else np.asarray(rows)
    valid = archive.valid_time
    have = archive.has_observation
    lookup = {}
    for st, v, o in zip(archive.station_id[have], valid[have], archive.observation[have]):
        lookup.setdefault((st, v), o)
    day = np.timedelta64(1, "D")
    out = np.full((len(rows), window_days), np.nan)
    for j, i in enumerate(rows):
        st, v = archive.station_id[i], valid[i]
        for d in range(1, window_days + 1):
            out[j, d - 1] = lookup.get((st, v - d * day), np.nan)
    empty = np.all(np.isnan(out), axis=1)
    if np.any(empty):
        raise ValueError(f"{int(empty.sum())} cases have an empty climatology window")
    return out


# --- histograms and aggregated reports -------------------------------------

@dataclass
class HistogramReport:
    kind: str
    bin_counts: np.ndarray
    n: int
    edges: np.ndarray = None

    def rows(self):
        if self.kind == "rank":
            return [{"bin": i + 1, "count": int(c)} for i, c in enumerate(self.bin_counts)]
        return [{"bin_low": float(self.edges[i]), "bin_high": float(self.edges[i + 1]),
                 "count": int(c)} for i, c in enumerate(self.bin_counts)]


def pit_histogram(pits, n_bins=10):
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    counts, _ = np.histogram(np.clip(pits, 0.0, 1.0), bins=edges)
    return HistogramReport("pit", counts, int(len(pits)), edges)


def rank_histogram(ranks, n_members):
    counts = np.bincount(np.asarray(ranks, dtype=int) - 1, minlength=n_members + 1)
    return HistogramReport("rank", counts, int(len(ranks)))


@dataclass
class ScoreReport:
    axis: str
    key: object
    n_cases: int
    mean_crps: float
    mean_crps_ref: float
    crpss: float
    ci_low: float = np.nan
    ci_high: float = np.nan
    mean_crps_clim: float = np.nan
    crpss_clim: float = np.nan
    mean_bs: dict = field(default_factory=dict)
    mean_bs_ref: dict = field(default_factory=dict)
    bss: dict = field(default_factory=dict)
    coverage: float = np.nan
    coverage_ref: float = np.nan
    nominal_coverage: float = np.nan
    mae_median: float = np.nan
    mae_median_ref: float = np.nan
    rmse_mean: float = np.nan
    rmse_mean_ref: float = np.nan

    def flat(self):
        d = asdict(self)
        for name in ("mean_bs", "mean_bs_ref", "bss"):
            for z, v in d.pop(name).items():
                d[f"{name}_{z:g}"] = v
        return d


@dataclass
class CaseScores:
    """Per-case scores of a forecast and a reference on one common case set.

    Arrays are aligned and time ordered; ``bs`` maps threshold -> array.
    """

    station: np.ndarray
    valid_time: np.ndarray
    lead_minutes: np.ndarray
    crps: np.ndarray
    crps_ref: np.ndarray
    bs: dict
    bs_ref: dict
    covered: np.ndarray
    covered_ref: np.ndarray
    abs_err_median: np.ndarray
    abs_err_median_ref: np.ndarray
    sq_err_mean: np.ndarray
    sq_err_mean_ref: np.ndarray
    crps_clim: np.ndarray = None
    daylight: np.ndarray = None  # "day" / "night" / "unknown"

    def __len__(self):
        return len(self.crps)

    def subset(self, mask):
        def pick(v):
            if v is None:
                return None
            if isinstance(v, dict):
                return {k: a[mask] for k, a in v.items()}
            return v[mask]
        return CaseScores(**{k: pick(v) for k, v in self.__dict__.items()})

    def axis_values(self, axis):
        vt = self.valid_time
        if axis == "lead_minutes":
            return self.lead_minutes
        if axis == "obs_hour":
            return ((vt - vt.astype("datetime64[D]")) // np.timedelta64(1, "h")).astype(int)
        if axis == "month":
            return (vt.astype("datetime64[M]").astype(int) % 12) + 1
        if axis == "station":
            return self.station.astype(str)
        if axis == "daylight":
            return self.daylight
        if axis == "pooled":
            return np.full(len(vt), "all", dtype=object)
        raise ValueError(f"unknown aggregation axis {axis!r}")


def summarize(cs, axis, key, n_members, n_boot=2000, mean_block_len=None, seed=0):
    crps_f, crps_r = float(np.mean(cs.crps)), float(np.mean(cs.crps_ref))
    rep = ScoreReport(axis=axis, key=key, n_cases=len(cs), mean_crps=crps_f,
                      mean_crps_ref=crps_r, crpss=skill_score(crps_f, crps_r))
    if n_boot and len(cs) >= 10:
        rep.ci_low, rep.ci_high = bootstrap_ci(cs.crps, cs.crps_ref, n_boot, mean_block_len, seed)
    if cs.crps_clim is not None:
        rep.mean_crps_clim = float(np.mean(cs.crps_clim))
        rep.crpss_clim = skill_score(crps_f, rep.mean_crps_clim)
    for z in cs.bs:
        f, r = float(np.mean(cs.bs[z])), float(np.mean(cs.bs_ref[z]))
        rep.mean_bs[z], rep.mean_bs_ref[z], rep.bss[z] = f, r, skill_score(f, r)
    rep.coverage = float(np.mean(cs.covered))
    rep.coverage_ref = float(np.mean(cs.covered_ref))
    rep.nominal_coverage = nominal_coverage(n_members) / 100.0
    rep.mae_median = float(np.mean(cs.abs_err_median))
    rep.mae_median_ref = float(np.mean(cs.abs_err_median_ref))
    rep.rmse_mean = float(np.sqrt(np.mean(cs.sq_err_mean)))
    rep.rmse_mean_ref = float(np.sqrt(np.mean(cs.sq_err_mean_ref)))
    return rep


def aggregate(cs, axis, n_members, n_boot=2000, mean_block_len=None, seed=0):
    """One :class:`ScoreReport` per value of ``axis``; each key gets its own bootstrap seed."""
    values = cs.axis_values(axis)
    keys = sorted(set(values.tolist()))
    seeds = np.random.SeedSequence(seed).spawn(len(keys))
    out = []
    for key, ss in zip(keys, seeds):
        sub = cs.subset(values == key)
        out.append(summarize(sub, axis, key, n_members, n_boot, mean_block_len,
                             int(ss.generate_state(1)[0])))
    return out
