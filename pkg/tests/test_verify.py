import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats as sps

from cl0emos import dist
from cl0emos.dist import Cl0Params
from cl0emos.verify import (CaseScores, aggregate, alpha_for_members, bootstrap_ci, brier,
                            climatology_reference, coverage, crps_empirical, default_block_length,
                            ecdf, interval_ensemble, interval_parametric, interval_quantiles,
                            ks_uniform, mae_rmse, nominal_coverage, pit, pit_empirical,
                            pit_histogram, rank, rank_histogram, skill_score,
                            stationary_bootstrap_indices)
from oracles import crps_double_sum, crps_ecdf_quadrature
from test_training import grid_archive

AROME_THRESHOLDS = (25.0, 127.0, 498.0, 604.0)


# --- CRPS of ensembles ---------------------------------------------------

@pytest.mark.parametrize("members,y,expected", [
    ([5.0], 3.0, 2.0),
    ([0.0, 10.0], 0.0, 2.5),
    ([7.0, 7.0, 7.0], 7.0, 0.0),
])
def test_crps_empirical_examples(members, y, expected):
    assert crps_empirical(np.array(members), y) == pytest.approx(expected, abs=1e-14)


def test_crps_empirical_empty():
    with pytest.raises(ValueError):
        crps_empirical(np.array([]), 1.0)
    with pytest.raises(ValueError):
        crps_empirical(np.full((1, 3), np.nan), 1.0)


small_ens = arrays(float, st.integers(1, 8), elements=st.floats(0, 1000))


@given(small_ens, st.floats(0, 1000))
def test_crps_empirical_matches_brute_force(members, y):
    got = crps_empirical(members, y)
    assert got == pytest.approx(crps_ecdf_quadrature(members, y), rel=1e-8, abs=1e-8)
    assert got == pytest.approx(crps_double_sum(members, y), rel=1e-8, abs=1e-8)


def test_crps_empirical_nan_padding():
    padded = np.array([[1.0, 4.0, np.nan, 9.0]])
    assert crps_empirical(padded, [3.0])[0] == pytest.approx(crps_double_sum([1, 4, 9], 3.0))


# --- Brier and skill -----------------------------------------------------

@pytest.mark.parametrize("f,y,z,expected", [
    (1.0, 10.0, 10.0, 0.0),
    (1.0, 3.0, 10.0, 0.0),
    (0.3, 11.0, 10.0, 0.09),
])
def test_brier_examples(f, y, z, expected):
    assert brier(f, y, z) == pytest.approx(expected, abs=1e-15)


def test_brier_range_checked():
    with pytest.raises(ValueError):
        brier(1.2, 0.0, 1.0)


@pytest.mark.parametrize("z", AROME_THRESHOLDS)
def test_brier_arome_thresholds(z):
    ens = np.array([[0.0, 30.0, 200.0, 550.0, 700.0]])
    bs = brier(ecdf(ens, z), np.array([300.0]), z)
    assert 0.0 <= bs[0] <= 1.0


def test_ecdf():
    ens = np.array([[1.0, 2.0, 3.0, np.nan]])
    assert ecdf(ens, 2.0)[0] == pytest.approx(2 / 3)
    assert np.allclose(ecdf(np.array([[1.0, 2.0], [5.0, 6.0]]), np.array([1.5, 7.0])), [0.5, 1.0])


def test_skill_score_cases():
    assert skill_score(3.2, 3.2) == 0.0
    assert skill_score(0.0, 4.0) == 1.0
    assert np.isnan(skill_score(1.0, 0.0))
    assert np.isnan(skill_score(1.0, 1e-7))


@given(st.floats(0, 1e3), st.floats(1.0, 1e3), st.floats(1e-2, 1e2))
def test_skill_score_scale_invariant(s, r, c):
    # power-of-two factors keep the products exact; refs stay above the undefined guard
    k = 2.0 ** np.round(np.log2(c))
    assert skill_score(s * k, r * k) == skill_score(s, r)


def test_brier_integral_approximates_crps():
    rng = np.random.default_rng(3)
    n = 400
    params = Cl0Params(rng.uniform(-50, 600, n), rng.uniform(10, 80, n))
    y = dist.sample(Cl0Params(params.mu[:, None], params.sigma[:, None]), 1, rng)[:, 0]
    z = np.linspace(0, 1500, 6001)
    dz = z[1] - z[0]
    F = dist.cdf(Cl0Params(params.mu[:, None], params.sigma[:, None]), z[None, :])
    bs = brier(F, y[:, None], z[None, :])
    integral = np.mean(np.sum(bs, axis=1) * dz)
    exact = np.mean(dist.crps(params, y))
    assert abs(integral - exact) / exact < 0.02


# --- PIT, rank, coverage -------------------------------------------------

def test_pit_calibrated_uniform():
    rng = np.random.default_rng(11)
    n = 10_000
    params = Cl0Params(rng.uniform(-100, 500, n), rng.uniform(5, 100, n))
    y = dist.sample(Cl0Params(params.mu[:, None], params.sigma[:, None]), 1, rng)[:, 0]
    assert np.mean(y == 0) > 0.05
    assert ks_uniform(pit(params, y, seed=1)) <= 0.02


def test_pit_extremes():
    assert pit(Cl0Params(10.0, 1.0), 1e4, seed=0) == pytest.approx(1.0)
    u = pit(Cl0Params(np.full(2000, -1e3), 1.0), np.zeros(2000), seed=0)
    assert ks_uniform(u) < 0.05


def test_pit_empirical_ties_randomised():
    u = pit_empirical(np.zeros((5000, 10)), np.zeros(5000), seed=2)
    assert ks_uniform(u) < 0.05


def test_rank_extremes():
    assert rank(np.array([1.0, 2.0, 3.0]), 0.5, seed=0) == 1
    assert rank(np.array([1.0, 2.0, 3.0]), 9.0, seed=0) == 4


def test_rank_all_ties_uniform_across_seeds():
    M = 5
    members = np.zeros(M)
    counts = np.bincount([rank(members, 0.0, seed=s) for s in range(100_000)], minlength=M + 2)[1:]
    assert len(counts) == M + 1
    assert sps.chisquare(counts).pvalue > 0.01


def test_rank_histogram_calibrated_uniform():
    rng = np.random.default_rng(4)
    n, M = 100_000, 10
    mu = rng.uniform(-50, 400, (n, 1))
    draws = np.maximum(mu + 40 * rng.logistic(size=(n, M + 1)), 0.0)
    r = rank(draws[:, :M], draws[:, M], seed=5)
    h = rank_histogram(r, M)
    assert h.bin_counts.sum() == n
    assert sps.chisquare(h.bin_counts).pvalue > 0.01


@pytest.mark.parametrize("M,expected", [(11, 83.33), (40, 95.12), (3, 50.0)])
def test_nominal_coverage(M, expected):
    assert nominal_coverage(M) == pytest.approx(expected, abs=0.005)
    assert (1 - alpha_for_members(M)) * 100 == pytest.approx(nominal_coverage(M))


@pytest.mark.parametrize("M", [11, 40])
def test_parametric_coverage_self_generated(M):
    rng = np.random.default_rng(M)
    n = 10_000
    params = Cl0Params(rng.uniform(50, 500, n), rng.uniform(5, 60, n))
    y = dist.sample(Cl0Params(params.mu[:, None], params.sigma[:, None]), 1, rng)[:, 0]
    lo, hi = interval_parametric(params, alpha_for_members(M))
    assert abs(coverage(lo, hi, y).mean() * 100 - nominal_coverage(M)) <= 1.5


def test_interval_helpers():
    lo, hi = interval_ensemble(np.array([[3.0, 1.0, 2.0]]))
    assert lo[0] == 1.0 and hi[0] == 3.0
    levels = np.array([0.25, 0.5, 0.75])
    lo, hi = interval_quantiles(np.array([[1.0, 2.0, 3.0]]), levels, 0.5)
    assert lo[0] == 1.0 and hi[0] == 3.0
    with pytest.raises(ValueError):
        interval_parametric(Cl0Params(0.0, 1.0), 1.5)


@pytest.mark.parametrize("f,y,expected", [
    ([1.0, 2.0], [1.0, 2.0], (0.0, 0.0)),
    ([0.0, 0.0], [3.0, 4.0], (3.5, np.sqrt(12.5))),
    ([5.0], [2.0], (3.0, 3.0)),
])
def test_mae_rmse(f, y, expected):
    assert mae_rmse(f, y) == pytest.approx(expected, rel=1e-15)


def test_mae_rmse_length_mismatch():
    with pytest.raises(ValueError):
        mae_rmse([1.0, 2.0], [1.0])


# --- bootstrap -----------------------------------------------------------

def test_block_length_default():
    assert default_block_length(1000) == 10.0
    assert default_block_length(5000) == 18.0


def test_stationary_bootstrap_blocks():
    rng = np.random.default_rng(0)
    idx = stationary_bootstrap_indices(500, 200, 10.0, rng)
    assert idx.min() >= 0 and idx.max() < 500
    # continuation steps advance by one with wrap-around; mean run length ~ 10
    cont = (np.diff(idx, axis=1) % 500) == 1
    assert 0.85 < cont.mean() < 0.95


def test_bootstrap_deterministic():
    rng = np.random.default_rng(1)
    f, r = rng.exponential(1.0, 300), rng.exponential(1.2, 300)
    assert bootstrap_ci(f, r, seed=42) == bootstrap_ci(f, r, seed=42)


def test_bootstrap_identical_series():
    r = np.random.default_rng(2).exponential(1.0, 500)
    lo, hi = bootstrap_ci(r, r, seed=0)
    assert lo == 0.0 and hi == 0.0


def test_bootstrap_degenerate_reference():
    lo, hi = bootstrap_ci(np.ones(50), np.zeros(50))
    assert np.isnan(lo) and np.isnan(hi)


def test_bootstrap_too_short():
    with pytest.raises(ValueError):
        bootstrap_ci(np.ones(5), np.ones(5))


@pytest.mark.slow
def test_bootstrap_detects_positive_skill():
    # true skill 1 - 0.9 = 0.1 on i.i.d. exponential scores
    meta = np.random.SeedSequence(7).spawn(40)
    hits = 0
    for ss in meta:
        rng = np.random.default_rng(ss)
        ref = rng.exponential(1.0, 5000)
        f = ref * 0.9 * rng.uniform(0.5, 1.5, 5000)
        lo, hi = bootstrap_ci(f, ref, n_boot=2000, seed=int(ss.generate_state(1)[0]))
        hits += lo > 0
    assert hits / len(meta) >= 0.95


# --- climatology ---------------------------------------------------------

@pytest.mark.parametrize("window", [31, 365])
def test_climatology_members(window):
    arc = grid_archive("2019-01-01", window + 5, ["A"], [720])
    rows = np.flatnonzero(arc.init_date >= np.datetime64("2019-01-01") + window)
    ens = climatology_reference(arc, window, rows)
    assert ens.shape == (len(rows), window)
    assert not np.isnan(ens).any()
    # the most recent member is yesterday's observation
    assert np.array_equal(ens[:, 0], arc.observation[rows - 1])


def test_climatology_constant_history_zero_crps():
    arc = grid_archive("2020-01-01", 40, ["A"], [60])
    arc.observation[:] = 42.0
    ens = climatology_reference(arc, 31, [35])
    assert crps_empirical(ens, [42.0])[0] == 0.0


def test_climatology_empty_window():
    arc = grid_archive("2020-01-01", 5, ["A"], [60])
    with pytest.raises(ValueError):
        climatology_reference(arc, 31, [0])


# --- histograms and aggregation ------------------------------------------

def test_pit_histogram_counts():
    h = pit_histogram(np.array([0.05, 0.15, 0.95, 1.0]), 10)
    assert h.bin_counts.sum() == 4 and h.bin_counts[-1] == 2
    assert len(h.rows()) == 10


def _case_scores(n=120, seed=0):
    rng = np.random.default_rng(seed)
    vt = np.datetime64("2020-06-01T00:00") + np.arange(n) * np.timedelta64(60, "m")
    ref = rng.exponential(10, n)
    z = {25.0: rng.random(n) * 0.1}
    return CaseScores(np.array(["A", "B"] * (n // 2)), vt, np.tile([60, 120], n // 2),
                      ref * 0.7, ref, z, {25.0: z[25.0] * 2}, rng.random(n) < 0.8,
                      rng.random(n) < 0.5, rng.random(n), rng.random(n) + 1, rng.random(n),
                      rng.random(n) + 1, daylight=np.array(["day", "night"] * (n // 2)))


@pytest.mark.parametrize("axis,n_keys", [
    ("lead_minutes", 2), ("station", 2), ("obs_hour", 24), ("month", 1), ("pooled", 1),
    ("daylight", 2),
])
def test_aggregate_axes(axis, n_keys):
    reps = aggregate(_case_scores(), axis, n_members=11, n_boot=200, seed=0)
    assert len(reps) == n_keys
    assert sum(r.n_cases for r in reps) == 120


def test_aggregate_pooled_values():
    cs = _case_scores()
    rep = aggregate(cs, "pooled", n_members=11, n_boot=200, seed=0)[0]
    assert rep.crpss == pytest.approx(0.3)
    assert rep.bss[25.0] == pytest.approx(0.5)
    assert rep.nominal_coverage == pytest.approx(10 / 12)
    assert rep.ci_low <= rep.crpss <= rep.ci_high
    assert "bss_25" in rep.flat()


def test_aggregate_unknown_axis():
    with pytest.raises(ValueError):
        aggregate(_case_scores(), "weekday", n_members=11)
