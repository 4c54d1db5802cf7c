"""Command line entry point: ``denguecast {validate,lags,fit-predict,synth}``.

Exit codes: 0 success, 1 validation or data failure, 2 usage error.
Settings resolve as command-line flag > ``--config`` file (``key = value``
lines, keys as flag names) > built-in default.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .core import AlignmentError, DataValidationError, EpiWeek
from .evaluation import CoverageError, SplitSpec, compare, evaluate, predictions_csv
from .imputation import InsufficientDataError
from .ingest import (
    IngestError,
    atomic_write_text,
    climate_missing_fraction,
    parse_cases_csv,
    parse_climate_csv,
    parse_population_csv,
    parse_ssta_csv,
)
from .lags import LagSelectionError, InsufficientRowsError, read_lags_csv, select_panel_lags, write_lags_csv
from .pipeline import input_paths, load

log = logging.getLogger("denguecast")

DEFAULTS = {
    "seed": 0,
    "max_lag": 30,
    "abs": True,
    "target": "cases",
    "train_end": "2016-W52",
    "model": "both",
    "train": "2007-W01:2016-W52",
    "test": "2017-W01:2017-W52",
    "mode": "one-step",
    "response": "rr",
    "k": 10,
    "trees": 500,
    "mtry": 3,
    "min_node": 5,
    "jobs": 1,
    "precip_offset": 1.0,
    "max_interp_gap": 4,
    "years": 11,
    "areas": 5,
    "noise": 0.05,
    "missing_rate": 0.0,
    "start_year": 2007,
}

COMMAND_KEYS = {
    "validate": ["seed"],
    "lags": ["seed", "max_lag", "abs", "target", "train_end", "precip_offset", "max_interp_gap"],
    "fit-predict": [
        "seed", "max_lag", "abs", "target", "model", "train", "test", "mode", "response", "k", "trees", "mtry",
        "min_node", "jobs", "precip_offset", "max_interp_gap",
    ],
    "synth": ["seed", "years", "areas", "noise", "missing_rate", "start_year"],
}


class UsageError(Exception):
    pass


def _to_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on", "abs"):
        return True
    if low in ("0", "false", "no", "off", "raw"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def read_config(path) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key = key.strip().replace("-", "_")
        if key not in DEFAULTS:
            raise UsageError(f"{path}:{lineno}: unknown setting {key!r}")
        default = DEFAULTS[key]
        value = value.strip()
        try:
            if isinstance(default, bool):
                out[key] = _to_bool(value)
            else:
                out[key] = type(default)(value)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return out


def resolve(args: argparse.Namespace) -> dict:
    config = read_config(args.config) if args.config else {}
    resolved = {}
    for key in COMMAND_KEYS[args.command]:
        flag = getattr(args, key, None)
        resolved[key] = flag if flag is not None else config.get(key, DEFAULTS[key])
    return resolved


def _add_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data-dir", help="directory holding cases.csv, climate.csv, ssta.csv, population.csv")
    for key in ("cases", "climate", "ssta", "population"):
        p.add_argument(f"--{key}", help=f"{key} CSV (overrides --data-dir)")
    p.add_argument("--precip-offset", type=float, help="constant added before the precipitation log")
    p.add_argument("--max-interp-gap", type=int, help="longest gap bridged by linear interpolation")


def _add_lag_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-lag", type=int)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--abs", dest="abs", action="store_const", const=True, help="rank lags by |correlation|")
    g.add_argument("--raw", dest="abs", action="store_const", const=False, help="rank lags by signed correlation")
    p.add_argument("--target", choices=["cases", "rr"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="denguecast", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value settings file")
        p.add_argument("--print-config", action="store_true", help="print resolved settings and exit")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("validate", help="parse and check the four input files")
    common(p)
    for key in ("cases", "climate", "ssta", "population"):
        p.add_argument(f"--{key}")
    p.add_argument("--data-dir")

    p = sub.add_parser("lags", help="select covariate lags by cross-correlation")
    common(p)
    _add_inputs(p)
    _add_lag_flags(p)
    p.add_argument("--train-end", help="last week (YYYY-Www) used for selection")
    p.add_argument("--out", help="write the CSV here instead of stdout")

    p = sub.add_parser("fit-predict", help="fit GAM/RF on the training weeks and predict the test weeks")
    common(p)
    _add_inputs(p)
    _add_lag_flags(p)
    p.add_argument("--lags", help="lags CSV from the lags command (selected afresh otherwise)")
    p.add_argument("--model", choices=["gam", "rf", "both"])
    p.add_argument("--train", help="YYYY-Www:YYYY-Www")
    p.add_argument("--test", help="YYYY-Www:YYYY-Www")
    p.add_argument("--mode", choices=["one-step", "recursive"])
    p.add_argument("--response", choices=["rr", "cases"], help="dependent variable")
    p.add_argument("--k", type=int, help="spline basis dimension")
    p.add_argument("--trees", type=int)
    p.add_argument("--mtry", type=int)
    p.add_argument("--min-node", type=int)
    p.add_argument("--jobs", type=int, help="worker processes for per-area fitting")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("synth", help="write a synthetic data set in the four input formats")
    common(p)
    p.add_argument("--years", type=int)
    p.add_argument("--areas", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--missing-rate", type=float)
    p.add_argument("--start-year", type=int)
    p.add_argument("--out-dir", required=True)
    return parser


def _paths(args):
    try:
        return input_paths(args.data_dir, cases=args.cases, climate=args.climate, ssta=args.ssta, population=args.population)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_validate(args, cfg) -> int:
    paths = _paths(args)
    parsers = {
        "cases": parse_cases_csv,
        "climate": parse_climate_csv,
        "ssta": parse_ssta_csv,
        "population": parse_population_csv,
    }
    ok = True
    for key, parse in parsers.items():
        try:
            result = parse(paths[key], strict=False)
            report = result.report
            if key == "climate":
                report.notes.append(f"overall climate missing fraction {climate_missing_fraction(result):.4f}")
        except IngestError as exc:
            report = exc.report
        ok &= report.ok
        print(report.format())
    return 0 if ok else 1


def _selections(assembly, cfg, train_end: EpiWeek):
    return [
        select_panel_lags(panel, train_end, cfg["max_lag"], cfg["abs"], cfg["target"])
        for panel in assembly.panels.values()
    ]


def cmd_lags(args, cfg) -> int:
    assembly = load(_paths(args), precip_offset=cfg["precip_offset"], max_interp_gap=cfg["max_interp_gap"])
    selections = _selections(assembly, cfg, EpiWeek.parse(cfg["train_end"]))
    if args.out:
        write_lags_csv(args.out, selections)
    else:
        lines = ["area,covariate,lag,correlation"]
        for sel in selections:
            lines += [f"{sel.area},{c},{lag},{sel.correlations[c]!r}" for c, lag in sel.lags.as_dict().items()]
        sys.stdout.write("\n".join(lines) + "\n")
    return 0


def _evaluate_area(panel, lags, spec, kinds, cfg):
    params = dict(k=cfg["k"], trees=cfg["trees"], mtry=cfg["mtry"], min_node=cfg["min_node"], seed=cfg["seed"])
    return [evaluate(panel, lags, spec, kind, cfg["mode"], cfg["response"], **params) for kind in kinds]


def cmd_fit_predict(args, cfg) -> int:
    spec = SplitSpec.parse(cfg["train"], cfg["test"])
    assembly = load(_paths(args), precip_offset=cfg["precip_offset"], max_interp_gap=cfg["max_interp_gap"])
    if args.lags:
        lag_map = read_lags_csv(args.lags)
        missing = [a for a in assembly.panels if a not in lag_map]
        if missing:
            raise DataValidationError(f"lags file has no entry for {', '.join(missing)}")
        selections = None
    else:
        selections = _selections(assembly, cfg, spec.train_end)
        lag_map = {s.area: s.lags for s in selections}
    kinds = ["GAM", "RF"] if cfg["model"] == "both" else [cfg["model"].upper()]

    areas = list(assembly.panels)
    if cfg["jobs"] == 1:
        results = [_evaluate_area(assembly.panels[a], lag_map[a], spec, kinds, cfg) for a in areas]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=cfg["jobs"])(
            delayed(_evaluate_area)(assembly.panels[a], lag_map[a], spec, kinds, cfg) for a in areas
        )
    records = [r for per_area in results for r in per_area]

    out = Path(args.out_dir)
    (out / "models").mkdir(parents=True, exist_ok=True)
    if selections is not None:
        write_lags_csv(out / "lags.csv", selections)
    atomic_write_text(out / "predictions.csv", predictions_csv(records))
    table = compare(records)
    atomic_write_text(out / "nrmse.csv", table.to_csv())
    for r in records:
        suffix = "gam.txt" if r.model == "GAM" else "rf.json"
        atomic_write_text(out / "models" / f"{r.area}.{suffix}", r.fitted_model.dumps())
    if not args.no_plots:
        from .plots import prediction_svg

        (out / "plots").mkdir(exist_ok=True)
        for area in areas:
            atomic_write_text(out / "plots" / f"{area}.svg", prediction_svg(area, [r for r in records if r.area == area]))
    print(table.to_text(), end="")
    return 0


def cmd_synth(args, cfg) -> int:
    from .synthetic import generate_dataset

    ds = generate_dataset(cfg["seed"], cfg["years"], cfg["areas"], cfg["noise"], cfg["missing_rate"], cfg["start_year"])
    paths = ds.write(args.out_dir)
    for key, path in paths.items():
        print(f"{key}: {path}")
    return 0


COMMANDS = {"validate": cmd_validate, "lags": cmd_lags, "fit-predict": cmd_fit_predict, "synth": cmd_synth}

FAILURES = (
    IngestError,
    DataValidationError,
    AlignmentError,
    CoverageError,
    InsufficientDataError,
    InsufficientRowsError,
    LagSelectionError,
)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = resolve(args)
        if args.print_config:
            for key in sorted(cfg):
                print(f"{key} = {cfg[key]}")
            return 0
        print(f"seed: {cfg['seed']}", file=sys.stderr)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"denguecast: usage error: {exc}", file=sys.stderr)
        return 2
    except FAILURES as exc:
        print(f"denguecast: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        # bad flag values such as malformed week ranges
        print(f"denguecast: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
