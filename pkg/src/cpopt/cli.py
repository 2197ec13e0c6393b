"""Command-line entry point: ``cpopt <command> [options]``.

Commands: detect, distmat, optimize, simulate, cluster, backtest. Every
option can also come from a JSON file given with ``--config``, whose keys are
the option names with dashes replaced by underscores; explicit flags win.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical or
infeasibility error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .backtest import (BacktestConfig, density_csv, paths_csv, predictive_density_export,
                       run_backtest)
from .changepoint import (BreakSet, DetectorConfig, batch_detect, build_thresholds, detect_breaks,
                          read_breaks, write_breaks)
from .cluster import LINKAGES, cut, hclust, partition_csv
from .errors import DataError, NumericalError
from .ingest import CsvSchema, ReturnPanel, load_returns, write_prices_csv
from .io import atomic_write_text
from .optimizer import (PortfolioSpec, RiskMatrix, allocate_from_breaks, allocate_mvo, cpo_spec, mean_returns,
                        optimize)
from .setdist import AffinityMatrix, DistanceMatrix, DistanceMeasure, affinity_matrix, distance_matrix
from .synthetic import SimSpec, eight_asset_regime, simulate

log = logging.getLogger("cpopt")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _out(args, name: str) -> Path:
    return Path(args.out_dir) / name


def _schema(args) -> CsvSchema:
    cols = None
    if args.columns:
        cols = {c: c for c in args.columns.split(",") if c}
    return CsvSchema(date_column=args.date_column, price_columns=cols)


def _panel(args) -> ReturnPanel:
    return load_returns(args.prices, _schema(args))


def _detector(args) -> DetectorConfig:
    if args.alpha is not None:
        return DetectorConfig(alpha=args.alpha, arl0=None, min_segment=args.min_segment,
                              mc_reps=args.mc_reps, seed=args.seed)
    return DetectorConfig(arl0=args.arl0, min_segment=args.min_segment,
                          mc_reps=args.mc_reps, seed=args.seed)


def _measure(args) -> DistanceMeasure:
    if args.measure == "mj":
        return DistanceMeasure("mj", args.p)
    if args.measure == "wasserstein":
        return DistanceMeasure("wasserstein", args.q)
    return DistanceMeasure("hausdorff", 1.0)


def _range(text: str):
    if ":" not in text:
        raise UsageError(f"range {text!r} must look like START:END")
    a, b = text.split(":", 1)
    return a or None, b or None


def _floats(text):
    return [float(v) for v in text.split(",")] if text else None


def _bounds(args):
    return args.lower, args.upper


def _add_detector(p):
    g = p.add_argument_group("detector")
    g.add_argument("--arl0", type=int, default=1000, help="sequential mode: in-control average run length")
    g.add_argument("--alpha", type=float, default=None,
                   help="batch mode: false-positive level (single most likely break per asset)")
    g.add_argument("--min-segment", type=int, default=20)
    g.add_argument("--mc-reps", type=int, default=5000)


def _add_prices(p, required=True):
    p.add_argument("--prices", required=required, help="wide price CSV (date column + one column per asset)")
    p.add_argument("--date-column", default="date")
    p.add_argument("--columns", default=None, help="comma list of price columns to use (default: all)")


def _add_measure(p):
    p.add_argument("--measure", choices=("mj", "hausdorff", "wasserstein"), default="mj")
    p.add_argument("--p", type=float, default=0.5, help="MJ order")
    p.add_argument("--q", type=float, default=1.0, help="Wasserstein order")


def _add_alloc(p):
    p.add_argument("--lower", type=float, default=0.0, help="lower weight bound (all assets)")
    p.add_argument("--upper", type=float, default=1.0, help="upper weight bound (all assets)")
    p.add_argument("--resolution", type=float, default=None,
                   help="grid step dividing 1 (default: finest affordable, at most 0.005)")
    p.add_argument("--risk-free", type=float, default=0.0)
    p.add_argument("--tie-break", choices=("balanced", "lexicographic"), default="balanced")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_detect(args) -> int:
    panel = _panel(args)
    config = _detector(args)
    out = []
    if config.alpha is not None:
        lengths = {len(panel[a]) for a in panel.asset_ids}
        table = build_thresholds("batch", lengths, config)
        for a in panel.asset_ids:
            s = panel[a]
            hit = batch_detect(s, config, table)
            idx = () if hit is None else (hit[0],)
            out.append(BreakSet(a, idx, tuple(str(s.timestamps[i]) for i in idx)))
    else:
        table = build_thresholds("sequential", None, config)
        out = [detect_breaks(panel[a], config, table) for a in panel.asset_ids]
    write_breaks(_out(args, "breaks.csv"), out)
    for bs in out:
        log.info("%s: %d break(s)", bs.asset_id, len(bs))
    return EXIT_OK


def _ordered_breaks(path) -> list[BreakSet]:
    return read_breaks(path)


def cmd_distmat(args) -> int:
    breaks = _ordered_breaks(args.breaks)
    D = distance_matrix(breaks, _measure(args))
    D.write_csv(_out(args, "dist.csv"))
    affinity_matrix(D).write_csv(_out(args, "affinity.csv"))
    return EXIT_OK


def cmd_optimize(args) -> int:
    kw = dict(tie_break=args.tie_break)
    bounds = _bounds(args)
    R = _floats(args.expected_returns)
    if args.method == "mvo":
        if not args.prices:
            raise UsageError("optimize --method mvo needs --prices")
        result = allocate_mvo(_panel(args), bounds, args.resolution, args.risk_free, R, **kw)
    elif args.affinity:
        A = AffinityMatrix.read_csv(args.affinity)
        spec = _spec_for(args, A.asset_ids, bounds, R)
        result = optimize(spec, RiskMatrix.affinity(A), args.resolution, **kw)
    elif args.breaks:
        breaks = _ordered_breaks(args.breaks)
        spec = _spec_for(args, tuple(b.asset_id for b in breaks), bounds, R)
        result = allocate_from_breaks(breaks, spec, _measure(args), args.resolution, **kw)
    elif args.prices:
        panel = _panel(args)
        config = _detector(args)
        table = build_thresholds("sequential", None, config)
        breaks = [detect_breaks(panel[a], config, table) for a in panel.asset_ids]
        for bs in breaks:
            if len(bs) == 0:
                raise DataError(f"empty break set for asset {bs.asset_id}; no structural breaks detected")
        spec = cpo_spec(panel, bounds, args.risk_free, R)
        result = allocate_from_breaks(breaks, spec, _measure(args), args.resolution, **kw)
    else:
        raise UsageError("optimize --method cpo needs --prices, --breaks or --affinity")
    result.weights.write_csv(_out(args, "weights.csv"))
    result.write_report(_out(args, "report.json"), timing=args.timing, method=args.method)
    return EXIT_OK


def _spec_for(args, asset_ids, bounds, R) -> PortfolioSpec:
    """Expected returns from --expected-returns, else price means, else equal."""
    ids = tuple(asset_ids)
    if R is None and args.prices:
        panel = _panel(args)
        if set(panel.asset_ids) != set(ids):
            raise DataError("price file assets differ from break/affinity assets")
        means = dict(zip(panel.asset_ids, mean_returns(panel)))
        R = [float(means[a]) for a in ids]
    if R is None:
        R = [1.0] * len(ids)
    if len(R) != len(ids):
        raise DataError("one expected return per asset required")
    return PortfolioSpec(ids, R, args.risk_free, bounds[0], bounds[1])


def cmd_simulate(args) -> int:
    if args.regime:
        base = SimSpec.read_json(args.spec) if args.spec else SimSpec(n=2000)
        if args.seed_given:
            base = SimSpec.from_dict({**base.to_dict(), "seed": args.seed})
        outs = eight_asset_regime(base)
    else:
        if not args.spec:
            raise UsageError("simulate needs a spec JSON or --regime")
        spec = SimSpec.read_json(args.spec)
        if args.seed_given:
            spec = SimSpec.from_dict({**spec.to_dict(), "seed": args.seed})
        outs = [simulate(spec)]
    for o in outs:
        name = "returns.csv" if len(outs) == 1 else f"returns_{o.returns.asset_id}.csv"
        o.write_csv(_out(args, name))
    # price levels for the ingestion path: 100 * exp(cumulative log return)
    ts = np.concatenate([[outs[0].returns.timestamps[0] - np.timedelta64(1, "D")],
                         outs[0].returns.timestamps])
    prices = {o.returns.asset_id: 100.0 * np.exp(np.concatenate([[0.0], np.cumsum(o.returns.values)]))
              for o in outs}
    write_prices_csv(_out(args, "prices.csv"), ts, prices)
    return EXIT_OK


def cmd_cluster(args) -> int:
    D = DistanceMatrix.read_csv(args.dist)
    tree = hclust(D, args.linkage)
    tree.write_json(_out(args, "dendrogram.json"))
    tree.write_newick(_out(args, "dendrogram.nwk"))
    k = args.k if args.k is not None else 1
    if not 1 <= k <= len(D):
        raise UsageError(f"--k must lie in [1, {len(D)}]")
    atomic_write_text(_out(args, "partition.csv"), partition_csv(cut(tree, k)))
    return EXIT_OK


def cmd_backtest(args) -> int:
    panel = _panel(args)
    methods = ("cpo", "mvo") if args.method == "both" else (args.method,)
    reports, densities = {}, {}
    for m in methods:
        cfg = BacktestConfig(_range(args.train), _range(args.test), m, _detector(args), _measure(args),
                             _bounds(args), args.resolution, args.risk_free)
        rep = run_backtest(panel, cfg)
        rep.write_json(_out(args, f"report_{m}.json"))
        reports[m] = rep
        densities[m] = predictive_density_export(rep.returns, bins=args.bins)
    atomic_write_text(_out(args, "paths.csv"), paths_csv(reports))
    atomic_write_text(_out(args, "density.csv"), density_csv(densities))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", default=None, help="JSON file of option defaults")
    common.add_argument("--seed", type=int, default=0, help="seed for every random draw")
    common.add_argument("-o", "--out-dir", default=".", help="directory for output files")
    common.add_argument("--cache-dir", default=None, help="threshold cache directory (env CPOPT_CACHE_DIR)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="cpopt", description="Break-aware portfolio allocation toolkit.")
    parser.add_argument("--version", action="version", version=f"cpopt {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("detect", parents=[common], help="detect structural breaks per asset")
    _add_prices(p)
    _add_detector(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("distmat", parents=[common], help="distance and affinity matrices from breaks")
    p.add_argument("--breaks", required=True, help="breaks CSV (asset_id,index,timestamp)")
    _add_measure(p)
    p.set_defaults(func=cmd_distmat)

    p = sub.add_parser("optimize", parents=[common], help="grid-search portfolio weights")
    p.add_argument("--method", choices=("cpo", "mvo"), default="cpo")
    _add_prices(p, required=False)
    p.add_argument("--breaks", default=None, help="breaks CSV (cpo; skips detection)")
    p.add_argument("--affinity", default=None, help="affinity CSV (cpo; skips detection and distances)")
    p.add_argument("--expected-returns", default=None, help="comma list, one per asset")
    p.add_argument("--timing", action="store_true", help="record wall time in report.json")
    _add_detector(p)
    _add_measure(p)
    _add_alloc(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("simulate", parents=[common], help="simulate GARCH returns with jumps")
    p.add_argument("spec", nargs="?", default=None, help="SimSpec JSON")
    p.add_argument("--regime", action="store_true",
                   help="eight-asset regime (two clusters, two outliers) with the default GARCH parameters")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("cluster", parents=[common], help="hierarchical clustering of a distance matrix")
    p.add_argument("--dist", required=True, help="distance CSV")
    p.add_argument("--linkage", choices=LINKAGES, default="average")
    p.add_argument("--k", type=int, default=None, help="number of clusters for partition.csv")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("backtest", parents=[common], help="train/test comparison of allocations")
    _add_prices(p)
    p.add_argument("--train", required=True, help="START:END (YYYY-MM-DD)")
    p.add_argument("--test", required=True, help="START:END (YYYY-MM-DD)")
    p.add_argument("--method", choices=("cpo", "mvo", "both"), default="both")
    p.add_argument("--bins", type=int, default=50)
    _add_detector(p)
    _add_measure(p)
    _add_alloc(p)
    p.set_defaults(func=cmd_backtest)
    return parser


def _apply_config(parser, argv):
    """Re-parse with --config values as defaults so explicit flags override them."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    path = pre.parse_known_args(argv)[0].config
    subs = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in subs), None)
    if not path or command is None:
        return parser.parse_args(argv)
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise FileNotFoundError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise DataError(f"{path}: top level must be an object")
    sub = subs[command]
    known = {a.dest for a in sub._actions}
    unknown = sorted(set(cfg) - known - {"command"})
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    # required options may be satisfied by the file
    for a in sub._actions:
        if a.dest in cfg and a.required:
            a.required = False
    sub.set_defaults(**{k: v for k, v in cfg.items() if k != "command"})
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        args.seed_given = "--seed" in argv or any(a.startswith("--seed=") for a in argv)
        if args.config and not args.seed_given:
            args.seed_given = "seed" in json.loads(Path(args.config).read_text(encoding="utf-8"))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.cache_dir:
            os.environ["CPOPT_CACHE_DIR"] = args.cache_dir
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
