"""
Rolling training and verification on a synthetic archive
========================================================

The same steps the command line runs (train, predict, verify), called in
memory on a small synthetic archive: 2 stations, 3-hourly leads, a 31-day
rolling regional training window.
"""
# %%
import numpy as np

from cl0emos import pipeline
from cl0emos.data import GroupSpec
from cl0emos.pipeline import RunConfig
from cl0emos.synthetic import arome_groups, simulate_archive

arc = simulate_archive(n_stations=2, n_days=50, leads_minutes=np.arange(180, 1441, 180), seed=3)
groups = GroupSpec.from_mapping(arome_groups(arc.member_columns), arc.member_columns)
start = str(arc.init_date.min() + 31)
cfg = RunConfig(archive="in-memory", period={"start": start}, output_dir="demo_out", seed=3,
                verification={"n_boot": 500, "axes": ["lead_minutes", "daylight", "pooled"]})
print(len(arc), "cases from", arc.init_date.min(), "to", arc.init_date.max())

# %%
store = pipeline.train(cfg, arc, groups)
statuses = [r["status"] for r in store["records"]]
print({s: statuses.count(s) for s in sorted(set(statuses))})

# %%
rows, qnames, _ = pipeline.predict(cfg, store, arc, groups)
fc = [{k: ("" if v is None else str(v)) for k, v in r.items()} for r in rows]
reports, hists, _, _ = pipeline.verify_forecasts(cfg, fc, arc)
for r in reports["lead_minutes"]:
    print(f"lead {r.key:5d} min  CRPS {r.mean_crps:7.2f}  raw {r.mean_crps_ref:7.2f}  CRPSS {r.crpss:6.3f}")

# %%
day = next(r for r in reports["daylight"] if r.key == "day")
print(f"daylight CRPSS {day.crpss:.3f}, 95% CI [{day.ci_low:.3f}, {day.ci_high:.3f}]")
print("raw rank histogram:", hists["rank_raw"].bin_counts)
print("PIT histogram:     ", hists["pit"].bin_counts)
