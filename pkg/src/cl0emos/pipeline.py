"""
End-to-end orchestration: train a model store over all cells, predict, and
verify against the raw ensemble and a climatological reference.

A run is described by a :class:`RunConfig`, usually loaded from JSON.
"""
import csv
import json
import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import csi as csimod
from . import dist, emos, verify
from .data import DataError, GroupSpec, format_time, ingest, load_group_spec, parse_time
from .emos import EmosCoefficients, LinkVariant
from .seasonal import day_index
from .training import InsufficientTrainingData, Target, TrainingScheme, select_indices

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "CL0EMOS_OUTPUT_DIR"
AXES = ("lead_minutes", "obs_hour", "month", "station", "daylight", "pooled")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    archive: str
    groups: str = None
    variant: str = "simple_exchangeable"
    mode: str = "irradiance"
    training: dict = field(default_factory=lambda: {"temporal": "rolling", "length_days": 31,
                                                    "spatial": "regional"})
    period: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    quantiles: list = field(default_factory=lambda: [0.05, 0.25, 0.5, 0.75, 0.95])
    n_csi_levels: int = 100
    csi_eps: float = csimod.CSI_EPS
    score_from_quantiles: bool = False
    verification: dict = field(default_factory=dict)
    output_dir: str = None
    seed: int = 0
    n_jobs: int = 1

    @classmethod
    def load(cls, path, **overrides):
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        raw.update({k: v for k, v in overrides.items() if v is not None})
        base = Path(path).parent
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            cfg = cls(**raw)
        except TypeError as err:
            raise ConfigError(str(err)) from None
        # relative paths are taken relative to the config file
        for name in ("archive", "groups", "output_dir"):
            val = getattr(cfg, name)
            if val and not os.path.isabs(val):
                setattr(cfg, name, str(base / val))
        cfg.validate()
        return cfg

    def validate(self):
        kind = emos.ALIASES.get(self.variant, self.variant)
        if kind not in emos.KINDS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.mode not in ("irradiance", "csi"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        try:
            self.scheme(1)
        except (ValueError, TypeError) as err:
            raise ConfigError(f"training scheme: {err}") from None
        unknown = set(self.verification) - set(VERIFY_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown verification keys: {sorted(unknown)}")
        if kind.startswith("periodic") and self.training.get("temporal", "rolling") == "rolling" \
                and self.training.get("length_days", 31) < 180:
            warnings.warn("periodic variants need at least 180 days of training data", stacklevel=2)
        for q in self.quantiles:
            if not 0 < q < 1:
                raise ConfigError(f"quantile level {q} outside (0, 1)")

    def scheme(self, n_params):
        t = dict(self.training)
        min_cases = t.pop("min_cases", None)
        if min_cases is None:
            min_cases = 2 * n_params
        return TrainingScheme(min_cases=min_cases, **t)

    def out_dir(self):
        d = self.output_dir or os.environ.get(OUTPUT_DIR_ENV) or "cl0emos_out"
        Path(d).mkdir(parents=True, exist_ok=True)
        return Path(d)

    @property
    def verify_settings(self):
        return {**VERIFY_DEFAULTS, **self.verification}


VERIFY_DEFAULTS = {
    "thresholds": [],
    "alpha": None,  # default: match the ensemble's nominal range coverage
    "n_boot": 2000,
    "mean_block_len": None,
    "n_pit_bins": 10,
    "climatology_days": None,  # default: rolling training length
    "axes": list(AXES),
}


def load_inputs(cfg):
    archive = ingest(cfg.archive)
    if cfg.groups:
        groups = load_group_spec(cfg.groups, archive.member_columns)
    else:
        groups = GroupSpec.single(archive.n_members)
    return archive, groups


def _model_archive(cfg, archive):
    """The archive in model space plus the CSI pass-through flags."""
    if cfg.mode == "csi":
        return csimod.to_csi(archive, cfg.csi_eps)
    return archive, np.zeros(len(archive), dtype=bool)


def _target_dates(cfg, archive):
    dates = np.unique(archive.init_date)
    if cfg.period.get("start"):
        dates = dates[dates >= np.datetime64(cfg.period["start"], "D")]
    if cfg.period.get("end"):
        dates = dates[dates <= np.datetime64(cfg.period["end"], "D")]
    return dates


def _cells(archive, scheme):
    keys = set()
    st = archive.station_id.astype(str)
    for s, h, lead in zip(st, archive.init_hour, archive.lead_minutes):
        keys.add((s if scheme.spatial == "local" else "*", int(h), int(lead)))
    return sorted(keys)


def _fit_cell(args):
    """Fit every target date of one cell sequentially, warm-starting along the way."""
    cell, archive, variant, scheme, dates, optimizer = args
    station, init_hour, lead = cell
    in_cell = (archive.init_hour == init_hour) & (archive.lead_minutes == lead)
    if station != "*":
        in_cell &= archive.station_id == station
    cell_dates = set(archive.init_date[in_cell].tolist())
    records = []
    last, cache = None, {}
    for date in dates:
        if date.item() not in cell_dates:
            continue
        target = Target(station, init_hour, lead, date)
        first, stop = scheme.window(date)
        rec = {"station": station, "init_hour": init_hour, "lead_minutes": lead,
               "target_date": str(date), "window": [str(first), str(min(stop, date))]}
        window_key = (str(first), str(min(stop, date)))
        try:
            idx = select_indices(archive, scheme, target)
        except InsufficientTrainingData as err:
            rec["n_cases"] = err.n_found
            if last is None:
                rec.update(status="passthrough", coefficients=None, diagnostics=None)
            else:
                rec.update(status="fallback", coefficients=last.to_dict(), diagnostics=None)
            records.append(rec)
            continue
        rec["n_cases"] = int(len(idx))
        if window_key in cache:
            coefs, diag = cache[window_key]
        else:
            train = archive.take(idx)
            stats = variant.stats(train.members)
            coefs, diag = emos.estimate(variant, stats, day_index(train.valid_time),
                                        train.observation, init=last, **optimizer)
            cache = {window_key: (coefs, diag)}
        if not diag.degenerate:
            last = coefs
        rec.update(status="degenerate" if diag.degenerate else "fitted",
                   coefficients=coefs.to_dict(), diagnostics=_clean(diag.to_dict()))
        records.append(rec)
    return records


def _clean(d):
    return {k: (v.item() if isinstance(v, np.generic) else v) for k, v in d.items()}


def train(cfg, archive=None, groups=None):
    """Fit all cells and target dates. Returns the model store (a dict)."""
    if archive is None:
        archive, groups = load_inputs(cfg)
    variant = LinkVariant(cfg.variant, groups)
    scheme = cfg.scheme(variant.parameter_count)
    model_arc, _ = _model_archive(cfg, archive)
    dates = _target_dates(cfg, archive)
    optimizer = {k: cfg.optimizer[k] for k in ("xtol", "ftol", "maxiter", "max_restarts")
                 if k in cfg.optimizer}
    jobs = [(cell, model_arc, variant, scheme, dates, optimizer) for cell in _cells(archive, scheme)]
    if cfg.n_jobs and cfg.n_jobs > 1:
        with ProcessPoolExecutor(cfg.n_jobs) as pool:
            results = list(pool.map(_fit_cell, jobs))
    else:
        results = [_fit_cell(job) for job in jobs]
    records = [r for rs in results for r in rs]
    records.sort(key=lambda r: (r["target_date"], r["station"], r["init_hour"], r["lead_minutes"]))
    return {
        "variant": variant.kind,
        "mode": cfg.mode,
        "groups": groups.to_mapping(archive.member_columns),
        "member_columns": list(archive.member_columns),
        "parameter_count": variant.parameter_count,
        "scheme": {**cfg.training, "min_cases": scheme.min_cases},
        "records": records,
    }


def write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, allow_nan=True)
        fh.write("\n")


def write_table(rows, path, columns=None):
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: _cell(row.get(k)) for k in columns})


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    return "" if v is None else v


def store_summary(store):
    rows = []
    for r in store["records"]:
        d = r.get("diagnostics") or {}
        rows.append({"station": r["station"], "init_hour": r["init_hour"],
                     "lead_minutes": r["lead_minutes"], "target_date": r["target_date"],
                     "status": r["status"], "n_cases": r["n_cases"],
                     "converged": d.get("converged"), "n_iter": d.get("n_iter"),
                     "objective": d.get("objective"), "initial_objective": d.get("initial_objective")})
    return rows


def train_exit_code(store):
    statuses = [r["status"] for r in store["records"]]
    if not statuses or all(s == "passthrough" for s in statuses):
        return 2
    if any(s == "passthrough" for s in statuses):
        return 3
    return 0


# --- prediction -------------------------------------------------------------

def _level_name(q):
    return f"q{q:g}"


def predict(cfg, store, archive=None, groups=None):
    """Forecast rows (list of dicts) for every case in the prediction period.

    Returns ``(rows, quantile_column_names, csi_levels)``.
    """
    if archive is None:
        archive, groups = load_inputs(cfg)
    variant = LinkVariant(store["variant"], groups)
    model_arc, flags = _model_archive(cfg, archive)
    local = store["scheme"].get("spatial") == "local"
    lookup = {(r["station"], r["init_hour"], r["lead_minutes"], r["target_date"]): r
              for r in store["records"]}
    period = _target_dates(cfg, archive)
    use_q = cfg.mode == "csi" or cfg.score_from_quantiles
    levels = csimod.equidistant_levels(cfg.n_csi_levels)
    qnames = [_level_name(q) for q in cfg.quantiles]

    rows_idx = np.flatnonzero(np.isin(archive.init_date, period))
    stations = archive.station_id.astype(str)
    init_date = archive.init_date.astype(str)
    init_hour = archive.init_hour
    groups_of_rows = {}
    for i in rows_idx:
        key = (stations[i] if local else "*", int(init_hour[i]), int(archive.lead_minutes[i]),
               init_date[i])
        groups_of_rows.setdefault(key, []).append(i)

    out = {}
    for key, members in groups_of_rows.items():
        idx = np.array(members)
        rec = lookup.get(key)
        if rec is None or rec["coefficients"] is None:
            for i in idx:
                out[i] = {"kind": "raw",
                          "values": ";".join(repr(float(v)) for v in archive.members[i])}
            continue
        coefs = EmosCoefficients.from_dict(rec["coefficients"])
        params = emos.predict(coefs, variant, model_arc.take(idx))
        if cfg.mode == "csi":
            scale = np.where(flags[idx], 1.0, archive.clear_sky[idx])
        else:
            scale = np.ones(len(idx))
        mean = scale * dist.mean(params)
        median = scale * dist.median(params)
        qs = {name: scale * dist.quantile(params, q) for name, q in zip(qnames, cfg.quantiles)}
        if use_q:
            qf = csimod.csi_quantiles_to_irradiance(params, scale, cfg.n_csi_levels)
        for j, i in enumerate(idx):
            row = {"kind": "quantiles" if use_q else "cl0", "mu": float(params.mu[j]),
                   "sigma": float(params.sigma[j]), "scale": float(scale[j]),
                   "mean": float(mean[j]), "median": float(median[j]),
                   "p_zero": float(params.point_mass[j]) if scale[j] > 0 else 1.0}
            for name in qnames:
                row[name] = float(qs[name][j])
            if use_q:
                row["values"] = ";".join(repr(float(v)) for v in qf.values[j])
            out[i] = row

    rows = []
    for i in rows_idx:
        rows.append({"station_id": stations[i], "init_time": format_time(archive.init_time[i]),
                     "lead_minutes": int(archive.lead_minutes[i]), **out[i]})
    return rows, qnames, levels


FORECAST_COLUMNS = ["station_id", "init_time", "lead_minutes", "kind", "mu", "sigma", "scale",
                    "mean", "median", "p_zero"]


def write_forecasts(rows, qnames, path):
    write_table(rows, path, FORECAST_COLUMNS + qnames + ["values"])


def read_forecasts(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# --- verification -------------------------------------------------------------

def _f(x):
    return float(x) if x not in ("", None) else np.nan


def _values(rows):
    return np.array([[float(v) for v in r["values"].split(";")] for r in rows]).reshape(len(rows), -1)


def case_scores(cfg, forecasts, archive):
    """Join forecasts with observations and score forecast, raw ensemble and climatology.

    Returns ``(CaseScores, extras)``; extras holds PIT values, raw ranks,
    simulated-ensemble ranks and join statistics.
    """
    vs = cfg.verify_settings
    M = archive.n_members
    alpha = vs["alpha"] if vs["alpha"] is not None else verify.alpha_for_members(M)
    thresholds = [float(z) for z in vs["thresholds"]]
    levels = csimod.equidistant_levels(cfg.n_csi_levels)
    index = {(str(s), format_time(t), int(lead)): i for i, (s, t, lead) in
             enumerate(zip(archive.station_id, archive.init_time, archive.lead_minutes))}

    joined, n_unmatched, n_missing = [], 0, 0
    for fc in forecasts:
        i = index.get((fc["station_id"], format_time(parse_time(fc["init_time"])),
                       int(fc["lead_minutes"])))
        if i is None:
            n_unmatched += 1
        elif not np.isfinite(archive.observation[i]):
            n_missing += 1
        else:
            joined.append((i, fc))
    if not joined:
        raise DataError(f"no forecast could be joined with an observation "
                        f"({n_unmatched} unmatched, {n_missing} missing observations)")
    # time order for the bootstrap
    valid = archive.valid_time
    joined.sort(key=lambda r: (valid[r[0]], str(archive.station_id[r[0]]), r[0]))
    idx = np.array([r[0] for r in joined])
    fcs = [r[1] for r in joined]
    kind = np.array([fc["kind"] for fc in fcs])
    y = archive.observation[idx]
    raw = archive.members[idx]
    n = len(idx)

    seeds = np.random.SeedSequence(cfg.seed).spawn(4)
    rng_pit, rng_rank, rng_sim = (np.random.default_rng(s) for s in seeds[:3])

    crps = np.empty(n)
    cdf_z = {z: np.empty(n) for z in thresholds}
    covered = np.empty(n, dtype=bool)
    med = np.empty(n)
    mean = np.empty(n)
    pits = np.empty(n)

    par = np.flatnonzero(kind == "cl0")
    sim_ranks = np.zeros(0, dtype=int)
    if len(par):
        p = dist.Cl0Params(np.array([_f(fcs[j]["mu"]) for j in par]),
                           np.array([_f(fcs[j]["sigma"]) for j in par]))
        crps[par] = dist.crps(p, y[par])
        for z in thresholds:
            cdf_z[z][par] = dist.cdf(p, z)
        lo, hi = verify.interval_parametric(p, alpha)
        covered[par] = verify.coverage(lo, hi, y[par])
        med[par], mean[par] = dist.median(p), dist.mean(p)
        pits[par] = verify.pit(p, y[par], rng_pit)
        sim = dist.sample(dist.Cl0Params(p.mu[:, None], p.sigma[:, None]), M, rng_sim)
        sim_ranks = verify.rank(sim, y[par], rng_rank)

    for k in ("quantiles", "raw"):
        sel = np.flatnonzero(kind == k)
        if not len(sel):
            continue
        ens = _values([fcs[j] for j in sel])
        crps[sel] = verify.crps_empirical(ens, y[sel])
        for z in thresholds:
            cdf_z[z][sel] = verify.ecdf(ens, z)
        if k == "quantiles":
            lo, hi = verify.interval_quantiles(ens, levels, alpha)
            med[sel] = [_f(fcs[j]["median"]) for j in sel]
            mean[sel] = [_f(fcs[j]["mean"]) for j in sel]
        else:
            lo, hi = verify.interval_ensemble(ens)
            med[sel], mean[sel] = np.median(ens, axis=1), np.mean(ens, axis=1)
        covered[sel] = verify.coverage(lo, hi, y[sel])
        pits[sel] = verify.pit_empirical(ens, y[sel], rng_pit)

    crps_raw = verify.crps_empirical(raw, y)
    lo_r, hi_r = verify.interval_ensemble(raw)
    clim_days = vs["climatology_days"] or cfg.training.get("length_days", 365)
    try:
        clim = verify.climatology_reference(archive, int(clim_days), idx)
        crps_clim = verify.crps_empirical(clim, y)
    except ValueError as err:
        logger.warning("climatology reference unavailable: %s", err)
        crps_clim = None

    cs = verify.CaseScores(
        station=archive.station_id[idx].astype(str),
        valid_time=valid[idx],
        lead_minutes=archive.lead_minutes[idx],
        crps=crps, crps_ref=crps_raw,
        bs={z: verify.brier(cdf_z[z], y, z) for z in thresholds},
        bs_ref={z: verify.brier(verify.ecdf(raw, z), y, z) for z in thresholds},
        covered=covered, covered_ref=verify.coverage(lo_r, hi_r, y),
        abs_err_median=np.abs(med - y), abs_err_median_ref=np.abs(np.median(raw, axis=1) - y),
        sq_err_mean=(mean - y) ** 2, sq_err_mean_ref=(raw.mean(axis=1) - y) ** 2,
        crps_clim=crps_clim,
        daylight=_daylight(archive.clear_sky[idx]),
    )
    extras = {"pit": pits, "rank_raw": verify.rank(raw, y, rng_rank),
              "rank_sim": np.asarray(sim_ranks, dtype=int), "n_unmatched": n_unmatched,
              "n_missing_obs": n_missing, "alpha": alpha, "bootstrap_seed": seeds[3]}
    return cs, extras


def _daylight(clear_sky):
    cs = np.asarray(clear_sky, dtype=float)
    return np.where(np.isnan(cs), "unknown", np.where(cs > csimod.CSI_EPS, "day", "night")).astype(object)


def verify_forecasts(cfg, forecasts, archive=None):
    """Score reports per axis and histogram reports."""
    if archive is None:
        archive, _ = load_inputs(cfg)
    vs = cfg.verify_settings
    cs, extras = case_scores(cfg, forecasts, archive)
    boot_seed = int(extras["bootstrap_seed"].generate_state(1)[0])
    reports = {}
    for axis in vs["axes"]:
        reports[axis] = verify.aggregate(cs, axis, archive.n_members, vs["n_boot"],
                                         vs["mean_block_len"], boot_seed)
    hists = {"pit": verify.pit_histogram(extras["pit"], vs["n_pit_bins"]),
             "rank_raw": verify.rank_histogram(extras["rank_raw"], archive.n_members)}
    if len(extras["rank_sim"]):
        hists["rank_sim"] = verify.rank_histogram(extras["rank_sim"], archive.n_members)
    return reports, hists, cs, extras


def write_verification(reports, hists, extras, out):
    out = Path(out)
    for axis, reps in reports.items():
        write_table([r.flat() for r in reps], out / f"scores_{axis}.csv")
    write_json({"join": {"n_unmatched": extras["n_unmatched"], "n_missing_obs": extras["n_missing_obs"]},
                "alpha": extras["alpha"],
                "reports": {a: [_jsonable(r.flat()) for r in reps] for a, reps in reports.items()}},
               out / "scores.json")
    for name, h in hists.items():
        write_table(h.rows(), out / f"hist_{name}.csv")


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, np.generic):
            v = v.item()
        if isinstance(v, float) and np.isnan(v):
            v = None
        out[k] = v
    return out
