"""Command-line front end: simulate paths, run tests, build critical-value
tables, run experiments, and diff reports against the bundled references.

Exit codes: 0 success, 1 usage error, 2 computation error, 3 comparison
flagged a cell.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import asymp, mc, stats
from .dist import CenteredPareto, Pareto, RngStream, StandardNormal
from .fgn import FgnParams
from .lmsv import MeanShift, NoChange, SeriesSpec, TailShift, VarianceScale, simulate_components
from .stats import Transform, TrimSpec

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_COMPUTATION = 2
EXIT_FLAGGED = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise UsageError(message)


_TRANSFORMS = {
    "identity": Transform.IDENTITY,
    "square": Transform.SQUARE,
    "log-abs": Transform.LOG_ABS,
    "log-square": Transform.LOG_SQUARE,
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="lmsvtest", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[], help="simulate one LMSV path as CSV")
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--hurst", type=float, required=True)
    sim.add_argument("--noise", choices=["normal", "pareto", "centered-pareto"], default="normal")
    sim.add_argument("--alpha", type=float, help="tail index for Pareto-type noise")
    sim.add_argument("--scale", type=float, default=1.0)
    sim.add_argument("--change", choices=["none", "mean", "variance", "tail"], default="none")
    sim.add_argument("--h", type=float, default=0.0, help="change height")
    sim.add_argument("--tau", type=float, default=0.5, help="change location as a proportion")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--stream-id", type=int, default=0)
    sim.add_argument("--latent", action="store_true", help="emit y,eps,x columns instead of x")
    sim.add_argument("--out", type=Path, help="output CSV path (default stdout)")

    test = sub.add_parser("test", help="run one change-point test on a CSV series")
    test.add_argument("--input", type=Path, required=True)
    test.add_argument("--family", choices=list(mc.FAMILIES), required=True)
    test.add_argument("--psi", choices=list(_TRANSFORMS), default="identity")
    test.add_argument("--problem", choices=list(mc.PROBLEMS),
                      help="resolve normalization and critical value for this problem")
    test.add_argument("--hurst", type=float, help="Hurst index for normalization/tables")
    test.add_argument("--alpha", type=float, help="innovation tail index (Pareto problems)")
    test.add_argument("--sigma", type=float,
                      help="known noise scale for the mean-problem CUSUM; estimated when omitted")
    test.add_argument("--level", type=float, default=0.05)
    test.add_argument("--tau1", type=float, default=0.15)
    test.add_argument("--tau2", type=float, default=0.85)
    test.add_argument("--critical-value", type=float, help="override the critical value")
    test.add_argument("--tables", type=Path, help="directory of critical-value table JSON files")
    test.add_argument("--table-seed", type=int, default=0,
                      help="seed when a needed table has to be simulated on the fly")
    test.add_argument("--profile-out", type=Path, help="write the (k, value) profile as CSV")

    crit = sub.add_parser("critvals", help="simulate a critical-value table")
    crit.add_argument("--family", choices=["bridge", "sn"], required=True)
    crit.add_argument("--m", type=int, default=1, choices=[1, 2])
    crit.add_argument("--hurst", type=float, required=True)
    crit.add_argument("--tau1", type=float, default=0.15)
    crit.add_argument("--tau2", type=float, default=0.85)
    crit.add_argument("--paths", type=int, default=10_000)
    crit.add_argument("--grid", type=int, default=2_048)
    crit.add_argument("--levels", type=float, nargs="+", default=[0.90, 0.95, 0.99])
    crit.add_argument("--seed", type=int, default=0)
    crit.add_argument("--out", type=Path, required=True)

    exp = sub.add_parser("experiment", help="run a rejection-rate experiment from a config file")
    exp.add_argument("--config", type=Path, required=True)
    exp.add_argument("--out-dir", type=Path, required=True)
    exp.add_argument("--tables", type=Path,
                     help="directory of table JSON files (missing tables are simulated)")

    cmp_ = sub.add_parser("compare", help="compare a cells CSV against a reference table")
    cmp_.add_argument("--report", type=Path, required=True, help="cells.csv from an experiment run")
    cmp_.add_argument("--reference", required=True,
                      help="reference CSV path or builtin:<name> "
                           f"with name in {sorted(mc._REFERENCE_FILES)}")
    cmp_.add_argument("--max-z", type=float, default=3.0)
    cmp_.add_argument("--out", type=Path, help="write the per-cell comparison CSV here")

    return parser


def _noise_from_flags(args):
    if args.noise == "normal":
        return StandardNormal()
    if args.alpha is None:
        raise UsageError("--alpha is required for Pareto-type noise")
    if args.noise == "pareto":
        return Pareto(args.alpha, args.scale)
    return CenteredPareto(args.alpha, args.scale)


def _change_from_flags(args):
    if args.change == "none":
        return NoChange()
    if args.change == "mean":
        return MeanShift(h=args.h, tau=args.tau)
    if args.change == "variance":
        return VarianceScale(h=args.h, tau=args.tau)
    return TailShift(h=args.h, tau=args.tau)


def _cmd_simulate(args) -> int:
    try:
        spec = SeriesSpec(
            fgn=FgnParams(hurst=args.hurst, n=args.n),
            noise=_noise_from_flags(args),
            change=_change_from_flags(args),
        )
    except ValueError as err:
        # Bad flag values, caught before any computation starts.
        raise UsageError(str(err))
    y, eps, x = simulate_components(spec, RngStream(args.seed, args.stream_id))
    if args.latent:
        lines = [f"{yi:.17g},{ei:.17g},{xi:.17g}" for yi, ei, xi in zip(y, eps, x)]
    else:
        lines = [f"{xi:.17g}" for xi in x]
    text = "\n".join(lines) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)
    return EXIT_OK


def _read_series(path: Path) -> np.ndarray:
    values = []
    for i, line in enumerate(path.read_text().strip().splitlines()):
        cell = line.split(",")[-1].strip()
        try:
            values.append(float(cell))
        except ValueError:
            if i == 0:
                continue  # tolerate a header line
            raise UsageError(f"non-numeric value {cell!r} on line {i + 1} of {path}")
    if len(values) < 2:
        raise UsageError(f"{path} holds fewer than 2 observations")
    return np.asarray(values)


def _load_tables(directory: Path | None) -> mc.TableSet:
    tables = []
    if directory is not None:
        for file in sorted(directory.glob("*.json")):
            tables.append(asymp.CriticalValueTable.load(file))
    return mc.TableSet(tables)


def _resolve_test(args, xs: np.ndarray):
    """Normalization and critical value for a single-series test."""
    family = args.family
    trim = TrimSpec(tau1=args.tau1, tau2=args.tau2)
    transform = _TRANSFORMS[args.psi]
    if args.problem is None:
        return transform, trim, 1.0, args.critical_value

    n = xs.size
    level_q = round(1.0 - args.level, 6)
    brownian_case = args.problem == "mean" and family in ("cusum", "sn_cusum")
    if args.hurst is None and not brownian_case:
        raise UsageError("--hurst is required for this problem/family")
    tables = _load_tables(args.tables)

    def bridge_quantile(hurst):
        try:
            table = tables.get(asymp.TableFamily.CUSUM_BRIDGE_SUP, 1, hurst, None)
        except mc.MissingTableError:
            table = asymp.critical_values(
                asymp.TableFamily.CUSUM_BRIDGE_SUP, 1, hurst,
                RngStream(args.table_seed).substream(1), levels=(0.90, 0.95, 0.99, level_q),
            )
        return table.quantile(level_q)

    def sn_quantile(hurst):
        try:
            table = tables.get(asymp.TableFamily.SN_RATIO, 1, hurst, trim)
        except mc.MissingTableError:
            table = asymp.critical_values(
                asymp.TableFamily.SN_RATIO, 1, hurst,
                RngStream(args.table_seed).substream(2), trim=trim,
                levels=(0.90, 0.95, 0.99, level_q),
            )
        return table.quantile(level_q)

    if family == "cusum":
        if args.problem == "mean":
            sigma = args.sigma if args.sigma is not None else float(np.std(transform.apply(xs)))
            norm = math.sqrt(n) * sigma
            cv = asymp.kolmogorov_quantile(level_q)
        else:
            if args.problem == "variance":
                if args.alpha is None:
                    raise UsageError("--alpha is required for the variance problem")
                setup = asymp.hermite_rank_and_coeff(asymp.VarianceChange(args.alpha))
            else:
                setup = asymp.hermite_rank_and_coeff(asymp.TailChange())
            norm = asymp.dnm_exact(args.hurst, setup.m, n) * setup.coeff / math.factorial(setup.m)
            cv = bridge_quantile(args.hurst)
    elif family == "wilcoxon":
        if args.alpha is None:
            raise UsageError("--alpha is required for Wilcoxon normalization")
        if args.problem == "mean":
            setup = asymp.hermite_rank_and_coeff(asymp.MeanChangeWilcoxon(args.alpha))
        elif args.problem == "variance":
            setup = asymp.hermite_rank_and_coeff(asymp.VarianceChangeWilcoxon(args.alpha))
        else:
            raise UsageError("no Wilcoxon limit theory for the tail problem")
        norm = n * asymp.dnm_exact(args.hurst, setup.m, n) * setup.coeff / math.factorial(setup.m)
        cv = bridge_quantile(args.hurst)
    elif family == "sn_cusum":
        norm = 1.0
        cv = sn_quantile(0.5 if args.problem == "mean" else args.hurst)
    else:
        norm = 1.0
        cv = sn_quantile(args.hurst)

    if args.critical_value is not None:
        cv = args.critical_value
    return transform, trim, norm, cv


def _cmd_test(args) -> int:
    xs = _read_series(args.input)
    transform, trim, norm, cv = _resolve_test(args, xs)
    family = args.family
    if family == "cusum":
        stat = stats.cusum(xs, transform)
    elif family == "wilcoxon":
        stat = stats.wilcoxon(xs, transform)
    elif family == "sn_cusum":
        stat = stats.sn_cusum(xs, transform, trim)
    else:
        stat = stats.sn_wilcoxon(xs, transform, trim)
    outcome = stats.decide(stat, family, normalization=norm, critical_value=cv)
    if args.profile_out is not None:
        rows = stats.profile_to_rows(stat)
        args.profile_out.write_text(
            "k,value\n" + "\n".join(f"{k},{v:.17g}" for k, v in rows) + "\n"
        )
    sys.stdout.write(json.dumps(outcome.to_dict()) + "\n")
    return EXIT_OK


def _cmd_critvals(args) -> int:
    family = (
        asymp.TableFamily.CUSUM_BRIDGE_SUP if args.family == "bridge" else asymp.TableFamily.SN_RATIO
    )
    trim = TrimSpec(tau1=args.tau1, tau2=args.tau2) if family is asymp.TableFamily.SN_RATIO else None
    table = asymp.critical_values(
        family,
        args.m,
        args.hurst,
        RngStream(args.seed),
        trim=trim,
        levels=tuple(args.levels),
        budget=asymp.TableBudget(path_count=args.paths, path_length=args.grid),
    )
    table.save(args.out)
    sys.stdout.write(f"wrote {args.out}\n")
    return EXIT_OK


def _cmd_experiment(args) -> int:
    cfg = mc.ExperimentConfig.load(args.config)
    tables = mc.ensure_tables(cfg, existing=_load_tables(args.tables))
    report = mc.run_experiment(cfg, tables=tables)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    mc.cells_to_csv(report.cells, args.out_dir / "cells.csv")
    mc.report_to_csv(report, args.out_dir / "report.csv")
    (args.out_dir / "meta.json").write_text(json.dumps(report.meta, indent=2) + "\n")
    sys.stdout.write(
        f"wrote {args.out_dir}/report.csv ({len(report.cells)} cells, "
        f"{report.meta['wall_time_seconds']}s)\n"
    )
    return EXIT_OK


def _cmd_compare(args) -> int:
    cells = mc.cells_from_csv(args.report)
    if str(args.reference).startswith("builtin:"):
        reference = mc.load_reference(str(args.reference).split(":", 1)[1])
    else:
        reference = mc.reference_from_csv(Path(args.reference))
    result = mc.compare_to_reference(cells, reference, max_z=args.max_z)
    lines = ["family,hurst,n,alpha,h,local_rate,reference_rate,z,flagged"]
    for r in result.rows:
        alpha = "" if r.alpha is None else f"{r.alpha:g}"
        lines.append(
            f"{r.family},{r.hurst:g},{r.n},{alpha},{r.h:g},{r.local_rate:.4f},"
            f"{r.reference_rate:.4f},{r.z_score:.3f},{int(r.flagged)}"
        )
    text = "\n".join(lines) + "\n"
    if args.out is not None:
        args.out.write_text(text)
    sys.stdout.write(
        f"{len(result.rows)} cells compared, max |z| = {result.max_abs_z:.3f}, "
        f"{len(result.flagged)} flagged\n"
    )
    for r in result.flagged:
        sys.stdout.write(
            f"FLAGGED {r.family} H={r.hurst:g} n={r.n} alpha={r.alpha} h={r.h:g}: "
            f"local {r.local_rate:.3f} vs reference {r.reference_rate:.3f} (z={r.z_score:.2f})\n"
        )
    return EXIT_FLAGGED if result.flagged else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        sys.stderr.write(f"error: {err}\n")
        return EXIT_USAGE
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "test":
            return _cmd_test(args)
        if args.command == "critvals":
            return _cmd_critvals(args)
        if args.command == "experiment":
            return _cmd_experiment(args)
        return _cmd_compare(args)
    except UsageError as err:
        sys.stderr.write(f"error: {err}\n")
        return EXIT_USAGE
    except (ValueError, KeyError, OSError, asymp.QuadratureError) as err:
        sys.stderr.write(f"error: {err}\n")
        return EXIT_COMPUTATION


if __name__ == "__main__":
    sys.exit(main())
