"""
Command line interface.

    entrood run CONFIG
    entrood sweep TEMPLATE --param dim=2,4,8,16
    entrood validate CONFIG
    entrood plot REPORT

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

import argparse
import os
import sys
from typing import List, Optional, Sequence

import matplotlib
import yaml
from loguru import logger

from entrood import set_verbosity
from entrood._version import __version__
from entrood.errors import ConfigError, EntroodError


def _parse_param(text: str):

    if "=" not in text:
        raise ConfigError("--param expects name=v1,v2,..., got {!r}".format(text))
    name, values = text.split("=", 1)
    parsed = [yaml.safe_load(v) for v in values.split(",") if v.strip()]
    if not parsed:
        raise ConfigError("--param {}: no values given".format(name))

    return name.strip(), parsed


def _run(args: argparse.Namespace) -> int:

    from entrood.experiment import load_config, run_experiment

    cfg = load_config(args.config)
    report = run_experiment(cfg, workers=args.workers, out_dir=args.out_dir, formats=args.format)

    print("{}: report written to {}".format(cfg.id, args.out_dir or cfg.outputs["dir"]))
    for name, metrics in report.detectors.items():
        print("  {:<18s} AUROC {:.4f}  FPR@95TPR {:.4f}".format(name, metrics.auroc, metrics.fpr_at_95_tpr))

    return 0


def _sweep(args: argparse.Namespace) -> int:

    from entrood.experiment import emit_sweep_plots, expand_sweep, load_config, run_experiment

    template = load_config(args.template)
    name, values = _parse_param(args.param)
    out_dir = args.out_dir or template.outputs["dir"]

    reports = []
    for cfg in expand_sweep(template, name, values):
        reports.append(run_experiment(cfg, workers=args.workers, out_dir=os.path.join(out_dir, cfg.id),
                                      formats=args.format))
        print("{}: bound {}  P(Z>0) {:.4f}".format(cfg.id, reports[-1].contrast.chebyshev_bound,
                                                     reports[-1].contrast.empirical_p_z_gt_0.value))
    if name == "dim":
        print("sweep plot written to {}".format(emit_sweep_plots(reports, out_dir)))

    return 0


def _validate(args: argparse.Namespace) -> int:

    from entrood.experiment import load_config

    try:
        cfg = load_config(args.config)
    except ConfigError as err:
        for problem in err.errors:
            print(problem, file=sys.stderr)
        return err.exit_code

    print("{}: valid".format(cfg.id))
    return 0


def _plot(args: argparse.Namespace) -> int:

    from entrood.experiment import emit_plots, load_report

    report = load_report(args.report)
    report_dir = args.report if os.path.isdir(args.report) else os.path.dirname(args.report)
    for path in emit_plots(report, args.out_dir or report_dir):
        print(path)

    return 0


def build_parser() -> argparse.ArgumentParser:

    parser = argparse.ArgumentParser(prog="entrood",
                                     description="Entropy-aware diagnostics for likelihood-based OOD detection.")
    parser.add_argument("--version", action="version", version="entrood {}".format(__version__))

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=None, help="output directory, overrides the config")
    common.add_argument("--workers", type=int, default=1, help="worker threads, -1 for all CPUs")
    common.add_argument("--format", choices=("json", "csv"), action="append", default=None,
                        help="report format, repeat for several (default: from the config)")
    common.add_argument("--debug", action="store_true", help="print debug messages")

    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run one experiment")
    run.add_argument("config")
    run.set_defaults(func=_run)

    sweep = sub.add_parser("sweep", parents=[common], help="run a template over a parameter grid")
    sweep.add_argument("template")
    sweep.add_argument("--param", required=True, help="name=v1,v2,... e.g. dim=2,4,8,16")
    sweep.set_defaults(func=_sweep)

    validate = sub.add_parser("validate", parents=[common], help="check a config")
    validate.add_argument("config")
    validate.set_defaults(func=_validate)

    plot = sub.add_parser("plot", parents=[common], help="redraw the plots of a report")
    plot.add_argument("report")
    plot.set_defaults(func=_plot)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """ Entry point, returns the process exit code. """

    matplotlib.use("Agg")
    args = build_parser().parse_args(argv)
    set_verbosity(args.debug)

    try:
        return args.func(args)
    except EntroodError as err:
        logger.error(str(err))
        print("error: {}".format(err), file=sys.stderr)
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
