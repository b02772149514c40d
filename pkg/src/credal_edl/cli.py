"""Command-line entry point: ``credal-edl {cdec,idec,metrics,synth,ablate}``.

Data goes to ``--output``; progress and errors go to stderr.  Exit codes are
0 on success, 2 for usage errors, 3 for data errors and 4 for numerical
failures.
"""

import argparse
import logging
import sys

from . import data_io, pipeline
from .exceptions import CredalError, DataError, NumericalError

log = logging.getLogger("credal_edl")


def _grid(text):
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError("grid must be comma-separated integers") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("grid values must be positive")
    return values


def build_parser():
    parser = argparse.ArgumentParser(
        prog="credal-edl",
        description="Set-valued prediction and abstention from evidential ensembles.")
    sub = parser.add_subparsers(dest="verb", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", "-o", required=True, help="report or sample file to write")
    common.add_argument("--config", help="flat YAML/JSON file of run settings")
    common.add_argument("--seed", type=int)
    common.add_argument("--verbose", "-v", action="store_true")

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--input", "-i", required=True, help="JSON-lines sample file")
    run.add_argument("--gamma", type=float, help="miscoverage level (default 0.05)")
    run.add_argument("--epsilon", type=float, help="uncertainty margin (default 0.1)")
    run.add_argument("--jobs", "-j", type=int, default=1, help="worker processes")
    run.add_argument("--strict", action="store_true", help="stop at the first bad sample")

    p = sub.add_parser("cdec", parents=[common, run], help="credal decision rule")
    p.add_argument("--exact-ihdr", action="store_true", default=None,
                   help="minimum-size region search (k <= 20)")
    p = sub.add_parser("idec", parents=[common, run], help="interval decision rule")
    p.add_argument("--collapse-ensemble", action="store_true", default=None,
                   help="keep the first member of multi-member samples")
    p = sub.add_parser("ablate", parents=[common, run], help="CDEC over nested ensemble prefixes")
    p.add_argument("--exact-ihdr", action="store_true", default=None)
    p.add_argument("--grid", type=_grid, help="ensemble sizes, e.g. 1,3,5,7,10")

    p = sub.add_parser("metrics", parents=[common], help="metrics over a decision report")
    p.add_argument("--input", "-i", required=True, help="report written by cdec/idec")
    p.add_argument("--metric", action="append", choices=pipeline.METRIC_GROUPS,
                   help="restrict to these metric groups (repeatable)")
    p.add_argument("--n-bins", type=int, help="calibration bins (default 15)")

    sub.add_parser("synth", parents=[common], help="write a synthetic sample file")
    return parser


def _run_config(args, mode):
    values = data_io.load_config(args.config) if args.config else {}
    config = data_io.RunConfig.from_mapping(
        {k: v for k, v in values.items() if k in data_io.RunConfig.__dataclass_fields__})
    return config.replace(
        mode=mode,
        gamma=getattr(args, "gamma", None),
        epsilon=getattr(args, "epsilon", None),
        exact_ihdr=getattr(args, "exact_ihdr", None),
        collapse_ensemble=getattr(args, "collapse_ensemble", None),
        n_bins=getattr(args, "n_bins", None),
        seed=args.seed,
    ).validate()


def dispatch(args):
    if args.verb == "synth":
        values = data_io.load_config(args.config) if args.config else {}
        if args.seed is not None:
            values["seed"] = args.seed
        return pipeline.run_synth(data_io.SyntheticSpec.from_mapping(values), args.output)
    mode = "idec" if args.verb == "idec" else "cdec"
    config = _run_config(args, mode)
    if args.verb == "cdec":
        return pipeline.run_cdec(args.input, config, args.output, args.jobs, args.strict)
    if args.verb == "idec":
        return pipeline.run_idec(args.input, config, args.output, args.jobs, args.strict)
    if args.verb == "ablate":
        grid = args.grid
        if grid is None and args.config and "grid" in data_io.load_config(args.config):
            grid = config.grid
        return pipeline.run_ablate(args.input, config, args.output, grid,
                                   args.jobs, args.strict)
    which = tuple(args.metric) if args.metric else pipeline.METRIC_GROUPS
    return pipeline.run_metrics(args.input, config, args.output, which)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return dispatch(args)
    except NumericalError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return pipeline.EXIT_NUMERICAL
    except (DataError, CredalError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return pipeline.EXIT_DATA
    except OSError as exc:
        log.error("%s", exc)
        return pipeline.EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
