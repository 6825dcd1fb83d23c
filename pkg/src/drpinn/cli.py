"""Command-line front end.

    drpinn run --config exp.ini            # mode taken from the config
    drpinn reproduce-table1 [--config ..]  # packaged config when --config is omitted
    drpinn compare a/report.txt b/report.txt [--threshold 0.1]
    drpinn plot runs/table1                # re-render figures from plot-data CSVs

Exit codes: 0 ok, 1 unexpected error, 2 usage or config error,
3 training diverged, 4 I/O error, 5 invalid data or report.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiments, plots, report
from .config import MODES, ConfigError, builtin_config, load_config, validate_config
from .training import TrainingDiverged

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4
EXIT_DATA = 5

_BUILTIN = {"reproduce-table1": "table1", "reproduce-table2": "table2"}


def _common(p: argparse.ArgumentParser, config_required: bool):
    p.add_argument("--config", type=Path, required=config_required, help="experiment config file")
    p.add_argument("--seed", type=int, default=None, help="replace every seed in the config")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--quiet", action="store_true", help="only print errors and final tables")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="drpinn", description="PINN parameter extraction for "
                                 "dielectric-response equivalent circuits")
    sub = ap.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="run the mode named in the config"), True)
    for mode in MODES:
        _common(sub.add_parser(mode, help=f"run the config in {mode} mode"), mode not in _BUILTIN)
    c = sub.add_parser("compare", help="parameter-wise relative differences of two fit reports")
    c.add_argument("report_a", type=Path)
    c.add_argument("report_b", type=Path, help="reference; use 'truth' for the truth section of A")
    c.add_argument("--threshold", type=float, default=0.10)
    c.add_argument("--quiet", action="store_true")
    p = sub.add_parser("plot", help="render figures from the plot-data CSVs of an output directory")
    p.add_argument("directory", type=Path)
    p.add_argument("--quiet", action="store_true")
    return ap


def _load(args):
    if args.config is None:
        name = _BUILTIN[args.command]
        out = args.out if args.out is not None else Path("runs") / name
        cfg = load_config(builtin_config(name), args.seed, out)
    else:
        cfg = load_config(args.config, args.seed, args.out)
    if args.command != "run":
        cfg.mode = args.command
        validate_config(cfg)
    return cfg


def cmd_experiment(args) -> int:
    cfg = _load(args)
    result = experiments.run(cfg, quiet=args.quiet)
    if result["summary"]:
        print(result["summary"], end="")
    elif not args.quiet:
        for rep in result["reports"]:
            vals = ", ".join(f"{k}={v:.6g}" for k, v in rep.params.items())
            print(f"[{rep.method}] sigma={rep.extra.get('sigma', 0):g}: {vals}")
    if not args.quiet:
        print(f"artifacts in {cfg.output_dir}")
    return EXIT_OK


def cmd_compare(args) -> int:
    a = report.read_report(args.report_a)
    if str(args.report_b) == "truth":
        if not a.truth:
            raise ValueError(f"{args.report_a} has no truth section")
        b = type(a)(method="truth", params=dict(a.truth))
    else:
        b = report.read_report(args.report_b)
    rows = report.compare(a, b, args.threshold)
    print(report.format_comparison(rows, args.threshold))
    return EXIT_OK


def cmd_plot(args) -> int:
    root = args.directory
    dirs = sorted(p.parent for p in root.rglob("fit_data.csv"))
    if not dirs:
        raise FileNotFoundError(f"no plot data under {root}")
    for d in dirs:
        data = report.read_trace(d / "fit_data.csv")
        curve = report.read_trace(d / "fit_curve.csv")
        if "temperature" in data:
            plots.plot_fit_temperature(data, curve, d / "fit.png", d.name)
        else:
            plots.plot_fit(data, curve, d / "fit.png", d.name)
        if (d / "trace.csv").exists():
            truth = None
            if (d / "report.txt").exists():
                truth = report.read_report(d / "report.txt").truth
            plots.plot_trajectory(report.read_trace(d / "trace.csv"), d / "trajectory.png", truth, d.name)
        if (d / "resistance_curves.csv").exists():
            plots.plot_resistance(report.read_trace(d / "resistance_curves.csv"), d / "resistance.png", d.name)
        if not args.quiet:
            print(f"rendered {d}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    handler = {"compare": cmd_compare, "plot": cmd_plot}.get(args.command, cmd_experiment)
    try:
        return handler(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as e:
        print(f"training diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001
        print(f"unexpected error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
