"""
Command-line interface.

    cl0emos simulate --out DIR [--seed N]
    cl0emos train   CONFIG [--seed N] [--output-dir DIR]
    cl0emos predict CONFIG [--store FILE]
    cl0emos verify  CONFIG --seed N [--forecasts FILE]

Exit codes: 0 success, 1 configuration error, 2 data error, 3 partial failure.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .data import DataError, write_archive
from .emos import ModelError
from .pipeline import ConfigError, RunConfig
from .synthetic import arome_groups, simulate_archive

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_PARTIAL = 0, 1, 2, 3

log = logging.getLogger("cl0emos")


def _config(args):
    return RunConfig.load(args.config, output_dir=args.output_dir, seed=args.seed)


def cmd_simulate(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    arc = simulate_archive(n_stations=args.stations, n_days=args.days, start=args.start,
                           seed=args.seed)
    write_archive(arc, out / "archive.csv")
    with open(out / "groups.json", "w", encoding="utf-8") as fh:
        json.dump(arome_groups(arc.member_columns), fh, indent=1)
        fh.write("\n")
    first_target = str(arc.init_date.min() + 31)
    config = {"archive": "archive.csv", "groups": "groups.json", "variant": "simple_exchangeable",
              "training": {"temporal": "rolling", "length_days": 31, "spatial": "regional"},
              "period": {"start": first_target}, "output_dir": "out", "seed": args.seed}
    pipeline.write_json(config, out / "config.json")
    log.info("wrote %d cases to %s", len(arc), out)
    return EXIT_OK


def cmd_train(args):
    cfg = _config(args)
    store = pipeline.train(cfg)
    out = cfg.out_dir()
    pipeline.write_json(store, out / "models.json")
    pipeline.write_table(pipeline.store_summary(store), out / "fit_summary.csv")
    failed = sorted({(r["station"], r["init_hour"], r["lead_minutes"])
                     for r in store["records"] if r["status"] == "passthrough"})
    for cell in failed:
        log.warning("insufficient training data for cell %s", cell)
    return pipeline.train_exit_code(store)


def cmd_predict(args):
    cfg = _config(args)
    out = cfg.out_dir()
    store_path = Path(args.store) if args.store else out / "models.json"
    with open(store_path, encoding="utf-8") as fh:
        store = json.load(fh)
    rows, qnames, _ = pipeline.predict(cfg, store)
    pipeline.write_forecasts(rows, qnames, out / "forecasts.csv")
    n_raw = sum(r["kind"] == "raw" for r in rows)
    if n_raw:
        log.warning("%d of %d cases passed through as raw ensembles", n_raw, len(rows))
    return EXIT_PARTIAL if n_raw and n_raw < len(rows) else (EXIT_DATA if n_raw else EXIT_OK)


def cmd_verify(args):
    cfg = _config(args)
    out = cfg.out_dir()
    fc_path = Path(args.forecasts) if args.forecasts else out / "forecasts.csv"
    forecasts = pipeline.read_forecasts(fc_path)
    reports, hists, _, extras = pipeline.verify_forecasts(cfg, forecasts)
    pipeline.write_verification(reports, hists, extras, out)
    if extras["n_unmatched"]:
        log.warning("%d forecast rows could not be joined to the archive", extras["n_unmatched"])
        return EXIT_PARTIAL
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="cl0emos", description=__doc__.split("\n")[1])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic archive, group spec and config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stations", type=int, default=3)
    p.add_argument("--days", type=int, default=100)
    p.add_argument("--start", default="2020-05-07")
    p.set_defaults(func=cmd_simulate)

    for name, func, helptext in (("train", cmd_train, "fit the model store"),
                                 ("predict", cmd_predict, "write predictive distributions"),
                                 ("verify", cmd_verify, "score forecasts")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config")
        p.add_argument("--output-dir")
        p.add_argument("--seed", type=int, required=name == "verify")
        if name == "predict":
            p.add_argument("--store")
        if name == "verify":
            p.add_argument("--forecasts")
        p.set_defaults(func=func)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ModelError) as err:
        log.error("configuration error: %s", err)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError, ValueError) as err:
        log.error("data error: %s", err)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
