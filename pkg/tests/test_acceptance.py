"""Acceptance criteria, each run at its stated tolerance and runtime bound."""
import hashlib
import json
import time

import numpy as np
import pytest

from acceptance_report import record
from cl0emos import dist, pipeline
from cl0emos.cli import main
from cl0emos.csi import csi_quantiles_to_irradiance
from cl0emos.data import GroupSpec
from cl0emos.dist import Cl0Params
from cl0emos.emos import EmosCoefficients, LinkVariant, estimate, link
from cl0emos.pipeline import RunConfig
from cl0emos.synthetic import arome_groups, simulate_archive
from cl0emos.verify import (alpha_for_members, coverage, crps_empirical, interval_parametric,
                            ks_uniform, nominal_coverage, pit, skill_score, SS_EPS)
from oracles import crps_double_sum, crps_ecdf_quadrature, crps_quadrature

AROME = GroupSpec(("control", "perturbed"), ((0,), tuple(range(1, 11))))


def test_closed_form_crps_matches_quadrature():
    t0 = time.perf_counter()
    worst_excess = -np.inf
    n_bad = 0
    for mu in np.linspace(-500, 500, 10):
        for sigma in np.geomspace(0.01, 200, 10):
            for y in np.linspace(0, 1000, 10):
                ref = crps_quadrature(mu, sigma, y)
                err = abs(float(dist.crps(Cl0Params(mu, sigma), y)) - ref)
                tol = 1e-10 + 1e-8 * abs(ref)
                n_bad += err > tol
                worst_excess = max(worst_excess, err / tol)
    elapsed = time.perf_counter() - t0
    ok = n_bad == 0 and elapsed < 10
    record(1, "closed-form CRPS vs quadrature", ok,
           f"{n_bad}/1000 outside 1e-8 rel / 1e-10 abs, worst err/tol {worst_excess:.2g}, {elapsed:.1f}s")
    assert ok


def test_distribution_kernel():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    n = 100_000
    params = Cl0Params(rng.uniform(-500, 800, n), np.exp(rng.uniform(np.log(1e-3), np.log(300), n)))
    p = rng.uniform(1e-9, 1 - 1e-9, n)
    q = dist.quantile(params, p)
    # galois connection: F(x) >= p  <=>  x >= Q(p), probed at x = Q(p) and just below it
    below = np.nextafter(q, -np.inf)
    lower = np.all(dist.cdf(params, q) >= p)
    upper = np.all((q == 0) | (dist.cdf(params, below) < p))
    x = q + rng.normal(0, 1, n) * params.sigma
    consistent = np.array_equal(dist.cdf(params, x) >= p, x >= q)
    galois = bool(lower and upper and consistent)

    z_scores = []
    for mu, sigma in [(-50.0, 20.0), (0.0, 30.0), (300.0, 60.0), (5.0, 200.0)]:
        draws = dist.sample(Cl0Params(mu, sigma), 1_000_000, rng)
        se = draws.std(ddof=1) / np.sqrt(len(draws))
        z_scores.append(abs(draws.mean() - float(dist.mean(Cl0Params(mu, sigma)))) / se)
    elapsed = time.perf_counter() - t0
    ok = galois and max(z_scores) <= 3 and elapsed < 30
    record(2, "distribution kernel", ok,
           f"galois holds on 1e5 draws: {galois}, max |MC mean - formula| = "
           f"{max(z_scores):.2f} SE, {elapsed:.1f}s")
    assert ok


def test_parameter_counts():
    icon = GroupSpec.single(40)
    got = (LinkVariant("simple_exchangeable", AROME).parameter_count,
           LinkVariant("simple_exchangeable", icon).parameter_count,
           LinkVariant("periodic1", icon).parameter_count,
           LinkVariant("periodic2", icon).parameter_count)
    ok = got == (6, 5, 11, 15)
    record(3, "parameter counts", ok, f"AROME {got[0]}, ICON simple/periodic/periodic-2 {got[1:]}")
    assert ok


def test_nominal_coverage_constants():
    c11, c40 = nominal_coverage(11), nominal_coverage(40)
    ok = abs(c11 - 83.33) <= 0.01 and abs(c40 - 95.12) <= 0.01
    record(4, "nominal coverage", ok, f"M=11 {c11:.4f}%, M=40 {c40:.4f}%")
    assert ok


def test_self_consistency_recovery():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    M = 40
    variant = LinkVariant("simple_exchangeable", GroupSpec.single(M))
    truth = EmosCoefficients(np.array([8.0, 0.85]), -15.0, 0.4, 0.45)

    def simulate(n):
        signal = rng.uniform(0, 900, n) * (rng.random(n) > 0.15)
        spread = 10 + 0.06 * signal
        members = np.maximum(0.0, 1.1 * signal[:, None] + spread[:, None] * rng.logistic(size=(n, M)))
        stats = variant.stats(members)
        params = link(truth, variant, stats)
        y = dist.sample(Cl0Params(params.mu[:, None], params.sigma[:, None]), 1, rng)[:, 0]
        return stats, params, y

    train_stats, _, y_train = simulate(2000)
    test_stats, true_params, y_test = simulate(5000)
    coefs, diag = estimate(variant, train_stats, None, y_train)
    fitted = link(coefs, variant, test_stats)
    crps_fit = dist.crps(fitted, y_test).mean()
    crps_true = dist.crps(true_params, y_test).mean()
    rel = abs(crps_fit - crps_true) / crps_true
    ks = ks_uniform(pit(fitted, y_test, seed=6))
    lo, hi = interval_parametric(fitted, alpha_for_members(M))
    cov = coverage(lo, hi, y_test).mean() * 100
    elapsed = time.perf_counter() - t0
    ok = rel <= 0.01 and ks <= 0.02 and abs(cov - nominal_coverage(M)) <= 1.5 and elapsed < 120
    record(5, "self-consistency recovery", ok,
           f"CRPS rel diff {rel:.4f}, PIT KS {ks:.4f}, coverage {cov:.2f}% vs "
           f"{nominal_coverage(M):.2f}%, {elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_end_to_end_improvement(tmp_path):
    t0 = time.perf_counter()
    arc = simulate_archive(n_stations=3, n_days=100, bias=0.2, spread_factor=0.5, seed=0)
    groups = GroupSpec.from_mapping(arome_groups(arc.member_columns), arc.member_columns)
    start = str(arc.init_date.min() + 31)
    cfg = RunConfig(archive="in-memory", period={"start": start}, output_dir=str(tmp_path), seed=1,
                    training={"temporal": "rolling", "length_days": 31, "spatial": "regional"})
    store = pipeline.train(cfg, arc, groups)
    rows, _, _ = pipeline.predict(cfg, store, arc, groups)
    fc = [{k: ("" if v is None else str(v)) for k, v in r.items()} for r in rows]
    reports, hists, cs, extras = pipeline.verify_forecasts(cfg, fc, arc)
    day = next(r for r in reports["daylight"] if r.key == "day")
    pooled = reports["pooled"][0]
    counts = hists["rank_raw"].bin_counts
    edge_share = (counts[0] + counts[-1]) / counts.sum()
    uniform_share = 2 / len(counts)
    ks = ks_uniform(extras["pit"])
    elapsed = time.perf_counter() - t0
    a = day.crpss > 0.05 and day.ci_low > 0
    b = edge_share > 2 * uniform_share and ks <= 0.05
    c = pooled.mae_median < pooled.mae_median_ref
    ok = a and b and c and elapsed < 300
    record(6, "end-to-end improvement", ok,
           f"daylight CRPSS {day.crpss:.3f} CI [{day.ci_low:.3f}, {day.ci_high:.3f}]; raw rank "
           f"edge share {edge_share:.3f} vs 2x uniform {2 * uniform_share:.3f}; PIT KS {ks:.4f}; "
           f"MAE {pooled.mae_median:.2f} vs raw {pooled.mae_median_ref:.2f}; {elapsed:.0f}s")
    assert ok


def test_empirical_crps_brute_force():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        m = rng.integers(1, 9)
        members = np.round(rng.uniform(0, 1000, m), rng.integers(0, 3))  # allow ties
        y = float(rng.choice([0.0, rng.uniform(0, 1000), members[0]]))
        ref = crps_ecdf_quadrature(members, y)
        worst = max(worst, abs(crps_empirical(members, y) - ref), abs(crps_double_sum(members, y) - ref))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 10
    record(7, "empirical CRPS brute force", ok, f"max abs diff {worst:.2e}, {elapsed:.1f}s")
    assert ok


def test_skill_score_behaviour():
    self_ss = skill_score(12.5, 12.5)
    perfect = skill_score(0.0, 3.7)
    degenerate = skill_score(0.2, SS_EPS)
    ok = self_ss == 0.0 and perfect == 1.0 and np.isnan(degenerate) and np.isnan(skill_score(0.0, 0.0))
    record(8, "skill scores", ok,
           f"SS(F,F)={self_ss}, SS(perfect)={perfect}, ref<=1e-6 -> {degenerate}")
    assert ok


def _numeric_reports(reports):
    out = {}
    for axis, reps in reports.items():
        for r in reps:
            for k, v in r.flat().items():
                if isinstance(v, (float, int, np.floating, np.integer)) and not isinstance(v, bool):
                    out[(axis, str(r.key), k)] = float(v)
    return out


@pytest.mark.slow
def test_csi_round_trip(tmp_path):
    arc = simulate_archive(n_stations=2, n_days=40, leads_minutes=[480, 720, 960], seed=9)
    arc.clear_sky[:] = 1.0
    groups = GroupSpec.from_mapping(arome_groups(arc.member_columns), arc.member_columns)
    base = dict(archive="in-memory", period={"start": str(arc.init_date.min() + 31)},
                output_dir=str(tmp_path), seed=2, verification={"n_boot": 500})

    def scores(**kw):
        cfg = RunConfig(**base, **kw)
        rows, _, _ = pipeline.predict(cfg, pipeline.train(cfg, arc, groups), arc, groups)
        fc = [{k: ("" if v is None else str(v)) for k, v in r.items()} for r in rows]
        return _numeric_reports(pipeline.verify_forecasts(cfg, fc, arc)[0])

    irr = scores(mode="irradiance", score_from_quantiles=True)
    worst = 0.0
    for other in (scores(mode="csi"), scores(mode="csi", csi_eps=0.5)):
        assert other.keys() == irr.keys()
        for k, v in irr.items():
            w = other[k]
            if np.isnan(v) or np.isnan(w):
                worst = np.inf if np.isnan(v) != np.isnan(w) else worst
            else:
                worst = max(worst, abs(v - w) / max(1.0, abs(v)))

    # 100-quantile CRPS on mid-range cases: CSI locations 0.3-0.9, obs drawn from the forecast
    rng = np.random.default_rng(10)
    approx, exact, per_case = [], [], []
    for _ in range(200):
        mu, sigma, cs = rng.uniform(0.3, 0.9), rng.uniform(0.03, 0.2), rng.uniform(300, 900)
        y = float(dist.sample(Cl0Params(mu * cs, sigma * cs), 1, rng)[0])
        a = crps_ecdf_quadrature(csi_quantiles_to_irradiance(Cl0Params(mu, sigma), cs).values, y)
        e = crps_quadrature(mu * cs, sigma * cs, y)
        approx.append(a)
        exact.append(e)
        per_case.append(abs(a - e) / e)
    rel = abs(np.mean(approx) - np.mean(exact)) / np.mean(exact)
    ok = worst <= 1e-9 and rel < 0.01
    record(9, "CSI round trip", ok,
           f"max score diff CSI vs irradiance {worst:.1e}; mean-CRPS rel diff {rel:.5f} "
           f"({np.mean(np.array(per_case) < 0.01):.0%} of single cases within 1%)")
    assert ok


def _digest(directory):
    h = hashlib.sha256()
    for p in sorted(directory.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(directory)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


@pytest.mark.slow
def test_determinism(tmp_path):
    digests = []
    for run in ("a", "b"):
        d = tmp_path / run
        assert main(["simulate", "--out", str(d), "--seed", "11", "--stations", "2", "--days", "40"]) == 0
        cfg = json.loads((d / "config.json").read_text())
        cfg["verification"] = {"n_boot": 500, "thresholds": [25, 127, 498, 604]}
        (d / "config.json").write_text(json.dumps(cfg))
        config = str(d / "config.json")
        codes = [main(["train", config, "--seed", "11"]), main(["predict", config, "--seed", "11"]),
                 main(["verify", config, "--seed", "11"])]
        assert codes == [0, 0, 0]
        digests.append(_digest(d))
    ok = digests[0] == digests[1]
    record(10, "determinism", ok, f"sha256 of all outputs {digests[0][:16]} vs {digests[1][:16]}")
    assert ok
