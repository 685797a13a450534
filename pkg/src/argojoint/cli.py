"""Command-line entry point: ``argojoint <command> [flags]``.

Every command writes into ``--out`` and finishes with ``manifest.json``,
which records the inputs (with content hashes), the resolved configuration,
its hash and the seed. Exit codes: 0 success, 1 invalid input or flags,
2 failure while running.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .backtest import backtest
from .bundle import SchemaError, load_bundle, write_bundle
from .config import RunConfig
from .ensemble import ConstituentRegistry, RunContext, forecast_ensemble
from .evaluate import score
from .imputation import impute_bundle, write_imputations
from .national import forecast_national, forecast_national_ili
from .panel import SATURDAY, as_date
from .state import forecast_state, write_covariances
from .synthetic import SyntheticScenario, generate_synthetic
from .tables import read_forecasts, write_forecasts

log = logging.getLogger("argojoint")

COMMANDS = ("simulate", "impute", "fit-national", "fit-state", "ensemble", "backtest", "evaluate")
# keys a config file may carry besides RunConfig fields
RUN_KEYS = ("data_dir", "scenario", "as_of", "start_week", "end_week")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in uint64")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _saturday(text):
    try:
        d = as_date(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date: {text!r}") from None
    if d.weekday() != SATURDAY:
        raise argparse.ArgumentTypeError(f"{d} is not a Saturday")
    return d


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file of RunConfig fields (plus data_dir, scenario, "
                                                    "as_of, start_week, end_week)")
    common.add_argument("--seed", type=_u64, help="RNG seed (overrides the config file)")
    common.add_argument("--out", type=Path, required=True, help="output directory")
    common.add_argument("--threads", type=_positive, help="worker threads (default: logical cores)")
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    data = _Parser(add_help=False)
    data.add_argument("--data", type=Path, help="directory with cases.csv, ili.csv, trends.csv[, geography.csv]; "
                                                "without it the config's scenario is simulated")

    p = _Parser(prog="argojoint", description="Joint COVID-19 / influenza nowcasting pipeline.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="{" + ",".join(COMMANDS) + "}",
                           parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="write a synthetic dataset in the input schema")
    s.add_argument("--states", type=_positive, help="number of states")
    s.add_argument("--weeks", type=_positive, help="number of weeks")
    s.add_argument("--coupling", type=float, help="ILI / COVID-19 coupling in [-1, 1]")

    s = sub.add_parser("impute", parents=[common, data], help="daily ILI imputation draws")
    s.add_argument("--geo", action="append", help="restrict to these geos (repeatable)")

    s = sub.add_parser("fit-national", parents=[common, data], help="national ARGO-Joint forecast")
    s.add_argument("--as-of", type=_saturday, help="forecast origin (a Saturday)")
    s.add_argument("--signal", choices=["cases", "deaths", "ili"], default="cases")

    s = sub.add_parser("fit-state", parents=[common, data], help="state ARGOX-Idv forecasts")
    s.add_argument("--as-of", type=_saturday, help="forecast origin (a Saturday)")
    s.add_argument("--target", choices=["cases", "deaths", "ili"], default="cases")

    s = sub.add_parser("ensemble", parents=[common, data], help="winner-takes-all state ensemble")
    s.add_argument("--as-of", type=_saturday, help="forecast origin (a Saturday)")

    s = sub.add_parser("backtest", parents=[common, data], help="rolling retrospective evaluation")
    s.add_argument("--start", type=_saturday, help="first as-of week")
    s.add_argument("--end", type=_saturday, help="last as-of week")

    s = sub.add_parser("evaluate", parents=[common, data], help="score a forecast CSV against the truth")
    s.add_argument("--forecasts", type=Path, required=True, help="forecast CSV to score")
    s.add_argument("--target", choices=["cases", "deaths", "ili"], default="cases", help="truth to score against")
    return p


# -- configuration ------------------------------------------------------------


def _read_config(path):
    if path is None:
        return {}
    try:
        d = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path}: invalid JSON ({exc})") from None
    if not isinstance(d, dict):
        raise UsageError(f"config {path}: expected a JSON object")
    return d


def resolve(args):
    """Split the config file into RunConfig and run settings; apply flag overrides."""
    raw = _read_config(args.config)
    run = {k: raw.pop(k) for k in RUN_KEYS if k in raw}
    if args.seed is not None:
        raw["seed"] = args.seed
    raw["threads"] = args.threads or raw.get("threads") or os.cpu_count() or 1
    try:
        cfg = RunConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None
    if getattr(args, "data", None) is not None:
        run["data_dir"] = str(args.data)
    elif "data_dir" in run and args.config is not None:
        run["data_dir"] = str((args.config.parent / run["data_dir"]))
    return cfg, run


def _scenario(run, cfg, args) -> SyntheticScenario:
    fields = dict(run.get("scenario") or {})
    known = {f.name for f in dataclasses.fields(SyntheticScenario)}
    unknown = set(fields) - known
    if unknown:
        raise UsageError(f"unknown scenario keys: {sorted(unknown)}")
    fields["seed"] = cfg.seed
    for flag, key in (("states", "n_states"), ("weeks", "weeks"), ("coupling", "coupling")):
        if getattr(args, flag, None) is not None:
            fields[key] = getattr(args, flag)
    try:
        return SyntheticScenario(**fields)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid scenario: {exc}") from None


def _bundle(run, cfg, args, inputs):
    data_dir = run.get("data_dir")
    if data_dir is None:
        sc = _scenario(run, cfg, args)
        inputs["scenario"] = {k: (v.isoformat() if isinstance(v, dt.date) else v)
                              for k, v in dataclasses.asdict(sc).items()}
        return generate_synthetic(sc)
    root = Path(data_dir)
    if not root.is_dir():
        raise UsageError(f"data directory not found: {root}")
    try:
        bundle = load_bundle(root, cfg)
    except (SchemaError, FileNotFoundError) as exc:
        raise UsageError(str(exc)) from None
    for name in ("cases.csv", "ili.csv", "trends.csv", "geography.csv"):
        f = root / name
        if f.exists():
            inputs[str(f)] = _sha256(f)
    return bundle


def _last_week(bundle, horizon=0) -> dt.date:
    nat = bundle.weekly("cases", bundle.geography.nation)
    return nat.end - dt.timedelta(days=7 * horizon)


def _as_of(args, run, bundle) -> dt.date:
    value = args.as_of or run.get("as_of")
    if value is None:
        return _last_week(bundle)
    try:
        return _saturday(value) if isinstance(value, str) else value
    except argparse.ArgumentTypeError as exc:
        raise UsageError(f"as_of: {exc}") from None


# -- commands -----------------------------------------------------------------


def cmd_simulate(args, cfg, run, out, inputs):
    sc = _scenario(run, cfg, args)
    inputs["scenario"] = {k: (v.isoformat() if isinstance(v, dt.date) else v)
                          for k, v in dataclasses.asdict(sc).items()}
    write_bundle(generate_synthetic(sc), out)


def cmd_impute(args, cfg, run, out, inputs):
    bundle = _bundle(run, cfg, args, inputs)
    geos = args.geo or sorted(set(bundle.ili) & set(bundle.cases))
    missing = [g for g in geos if g not in bundle.ili or g not in bundle.cases]
    if missing:
        raise UsageError(f"no ILI and case data for {missing}")
    write_imputations(impute_bundle(bundle, cfg, geos), out / "imputations.csv")


def cmd_fit_national(args, cfg, run, out, inputs):
    bundle = _bundle(run, cfg, args, inputs)
    T = _as_of(args, run, bundle)
    view = bundle.truncate(T)
    if args.signal == "ili":
        table = forecast_national_ili(view, cfg, T)
    else:
        nat = view.geography.nation
        imps = impute_bundle(view, cfg, [nat]) if nat in view.ili else None
        fc = forecast_national(view, imps, cfg, T, args.signal)
        table = fc.table()
    write_forecasts(table, out / "forecasts.csv")


def cmd_fit_state(args, cfg, run, out, inputs):
    bundle = _bundle(run, cfg, args, inputs)
    T = _as_of(args, run, bundle)
    view = bundle.truncate(T)
    specs = {}
    table = forecast_state(view, impute_bundle(view, cfg), cfg, T, args.target, specs_out=specs)
    write_forecasts(table, out / "forecasts.csv")
    write_covariances(specs, out / "covariances.csv")


def cmd_ensemble(args, cfg, run, out, inputs):
    bundle = _bundle(run, cfg, args, inputs)
    T = _as_of(args, run, bundle)
    ctx = RunContext(impute_bundle(bundle.truncate(T), cfg))
    tables, record = forecast_ensemble(ConstituentRegistry.default(), bundle.truncate(T), cfg, T, ctx)
    for target, table in tables.items():
        write_forecasts(table, out / f"forecasts_{target}.csv")
    record.write(out / "selections.csv")


def cmd_backtest(args, cfg, run, out, inputs):
    bundle = _bundle(run, cfg, args, inputs)
    end = args.end or run.get("end_week")
    end = as_date(end) if end is not None else _last_week(bundle, max(cfg.horizons))
    start = args.start or run.get("start_week")
    start = as_date(start) if start is not None else end - dt.timedelta(days=7 * 9)
    try:
        res = backtest(ConstituentRegistry.default(), bundle, cfg, start, end)
    except ValueError as exc:
        if "Saturday" in str(exc) or "precedes" in str(exc):
            raise UsageError(str(exc)) from None
        raise
    res.write(out, bundle)


def cmd_evaluate(args, cfg, run, out, inputs):
    bundle = _bundle(run, cfg, args, inputs)
    if not args.forecasts.exists():
        raise UsageError(f"forecast file not found: {args.forecasts}")
    inputs[str(args.forecasts)] = _sha256(args.forecasts)
    try:
        table = read_forecasts(args.forecasts)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"{args.forecasts}: {exc}") from None
    report = score(table, lambda g: bundle.weekly(args.target, g) if g in bundle.geography else None)
    report.write(out / "metrics.csv")


HANDLERS = {
    "simulate": cmd_simulate,
    "impute": cmd_impute,
    "fit-national": cmd_fit_national,
    "fit-state": cmd_fit_state,
    "ensemble": cmd_ensemble,
    "backtest": cmd_backtest,
    "evaluate": cmd_evaluate,
}


# -- manifest -----------------------------------------------------------------


def _sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, command, args, cfg, run, inputs) -> None:
    """Everything needed to rerun: command, flags, resolved config and hashes of inputs and outputs.

    Paths are relative to ``out`` for outputs; no timestamps or absolute
    output paths are recorded, so identical runs give identical manifests.
    """
    flags = {k: (str(v) if isinstance(v, (Path, dt.date)) else v)
             for k, v in sorted(vars(args).items())
             if k not in ("out", "config", "threads", "log_level", "command", "data")}
    outputs = {str(p.relative_to(out)): _sha256(p)
               for p in sorted(out.rglob("*")) if p.is_file() and p.name != "manifest.json"}
    doc = {
        "command": command,
        "version": __version__,
        "flags": flags,
        "config": cfg.to_dict() | {"threads": None},
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "run": {k: v for k, v in sorted(run.items()) if k != "data_dir"},
        "inputs": inputs,
        "outputs": outputs,
    }
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg, settings = resolve(args)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        inputs = {}
        HANDLERS[args.command](args, cfg, settings, out, inputs)
        write_manifest(out, args.command, args, cfg, settings, inputs)
    except UsageError as exc:
        print(f"argojoint {args.command}: {exc}", file=sys.stderr)
        return 1
    except (RuntimeError, ValueError, KeyError, ArithmeticError, np.linalg.LinAlgError, OSError) as exc:
        print(f"argojoint {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
