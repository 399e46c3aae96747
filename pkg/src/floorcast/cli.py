"""Command-line entry point: ``floorcast <subcommand> ...``.

Exit status is 0 on success, 2 on invalid input and 3 on a numeric
failure (diverged training, degenerate fit).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from importlib import resources
from pathlib import Path

from . import calibrate as cal
from . import plotting, saestats, sweep
from .capacity import REFERENCE_ALPHAS, capacity_g, critical_width
from .errors import NumericError, SchemaError
from .importance import ActivationModel, floor_curve, make_importance
from .io import atomic_write_text, fmt, read_csv, write_csv

log = logging.getLogger("floorcast")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3
DEFAULT_SAE_WIDTHS = (128, 256, 512, 768, 1024)


class UsageError(Exception):
    """Flag combination that argparse cannot express; exits 2."""


def data_path(name: str) -> Path:
    return Path(str(resources.files("floorcast") / "data" / name))


def resolve_input(path) -> Path:
    """Existing path, or the bundled file of that name (``bundled_`` prefix optional)."""
    p = Path(path)
    if p.exists():
        return p
    for name in (p.name, p.name.removeprefix("bundled_")):
        candidate = data_path(name)
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"input file not found: {path}")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}")
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("widths must be positive integers")
    return values


def _figure_path(out, args) -> Path | None:
    if not getattr(args, "plot", False):
        return None
    if out is None:
        raise UsageError("--plot needs --out (the figure is written next to it)")
    return Path(out).with_suffix(".svg")


def _print_table(header, rows):
    print(",".join(header))
    for row in rows:
        print(",".join(fmt(v) for v in row))


# -- subcommands -----------------------------------------------------------------

def cmd_capacity(args):
    alphas = args.alpha or list(REFERENCE_ALPHAS)
    rows = []
    for a in alphas:
        g = capacity_g(a)
        d_crit = critical_width(args.features, a) if args.features else None
        rows.append((a, g, args.features, d_crit))
        line = f"alpha={a:g} g={g:.2f}"
        if d_crit is not None:
            line += f" d_crit={d_crit:.2f}"
        print(line)
    if args.out:
        write_csv(args.out, ("alpha", "g", "n_features", "d_crit"), rows)
        if (fig := _figure_path(args.out, args)) is not None:
            plotting.capacity_curve(fig, read_csv(args.out), n_features=args.features)
    return EXIT_OK


def cmd_predict(args):
    if args.input:
        stats = saestats.load_sae_stats(resolve_input(args.input))
        imp, act = saestats.to_prediction_inputs(stats, args.threshold)
        widths = args.widths or list(DEFAULT_SAE_WIDTHS)
    else:
        if args.alpha is None or len(args.alpha) != 1:
            raise UsageError("--features needs a single --alpha")
        imp = make_importance(args.importance, args.features, beta=args.beta)
        act = ActivationModel.bernoulli_uniform(args.alpha[0], args.features)
        widths = args.widths or list(range(1, args.features + 1))
    curve = floor_curve(imp, act, widths)
    if curve.degenerate:
        log.warning("reference width %d has zero predicted floor; normalized column is all zeros",
                    curve.reference_width)
    header = ["d_s", "f_kept", "f_dropped", "predicted", "normalized"]
    rows = [[p.d_s, p.f_kept, p.f_dropped, p.floor_raw, p.floor_normalized] for p in curve]
    if args.observed:
        obs = {int(r["d_s"]): float(r["observed"]) for r in read_csv(resolve_input(args.observed))}
        missing = [w for w in widths if w not in obs]
        if missing:
            raise SchemaError(f"--observed has no rows for widths {missing}")
        header.append("observed")
        for row in rows:
            row.append(obs[row[0]])
    _print_table(header, rows)
    if args.out:
        write_csv(args.out, header, rows)
        if (fig := _figure_path(args.out, args)) is not None:
            observed = [r[-1] for r in rows] if args.observed else [r[3] for r in rows]
            plotting.pred_vs_obs(fig, widths, [r[3] for r in rows], observed)
    return EXIT_OK


def cmd_toy_sweep(args):
    grid = sweep.load_grid(args.grid, seeds=args.seeds, steps=args.steps)
    log.info("grid: %s", json.dumps(grid.__dict__, default=list))
    out = Path(args.out)
    checkpoint = Path(args.checkpoint) if args.checkpoint else out.with_name(out.stem + ".ckpt.csv")

    def progress(done, total):
        log.info("sweep progress: %d/%d rows", done, total)

    rows = sweep.run_sweep(grid, checkpoint=checkpoint, progress=progress)
    sweep.write_rows_csv(rows, out)
    print(f"wrote {len(rows)} rows to {out}")
    if (fig := _figure_path(out, args)) is not None:
        plotting.floor_grid(fig, rows)
    lost = [r for r in rows if r.n_seeds == 0]
    if lost:
        log.error("%d row(s) lost every seed to divergence", len(lost))
        return EXIT_NUMERIC
    return EXIT_OK


SCORE_COLUMNS = ("formula", "pearson_r", "mape_percent", "r_squared", "log_r_squared",
                 "accuracy_percent", "median_accuracy", "mean_accuracy", "n_points",
                 "filter_threshold")


def cmd_score(args):
    rows = sweep.read_rows_csv(resolve_input(args.input))
    reports = [("refined", sweep.score(rows, args.threshold)),
               ("naive", sweep.naive_score(rows, args.threshold))]
    table = [(name, r.pearson_r, r.mape_percent, r.r_squared, r.log_r_squared,
              r.accuracy_percent, r.median_accuracy, r.mean_accuracy, r.n_points,
              r.filter_threshold) for name, r in reports]
    for name, r in reports:
        line = (f"{name}: r={r.pearson_r:.3f} MAPE={r.mape_percent:.1f}% R2={r.r_squared:.3f} "
                f"median_acc={r.median_accuracy:.1f}% n={r.n_points}")
        if args.log_space:
            line += f" log_R2={r.log_r_squared:.3f}"
        print(line)
        for note in r.warnings:
            log.warning("%s: %s", name, note)
    if args.out:
        write_csv(args.out, SCORE_COLUMNS, table)
        if args.heatmap:
            heat = sweep.error_heatmap(rows, args.threshold)
            write_csv(args.heatmap, ("alpha", "d_t", "n", "median_accuracy"),
                      [(*k, v) for k, v in heat.items()])
        if (fig := _figure_path(args.out, args)) is not None:
            kept = [r for r in rows if r.predicted_floor > args.threshold]
            naive = [sweep.prediction_for(sweep.SweepGrid(), r.n, r.alpha, r.d_s, capacity=1.0)
                     for r in kept]
            plotting.scatter(fig, kept, args.threshold, args.log_space, naive_pred=naive)
    if any(math.isnan(r.pearson_r) for _, r in reports):
        return EXIT_NUMERIC
    return EXIT_OK


COLLAPSE_COLUMNS = ("width_ratio", "normalized_floor", "normalized_std", "n", "d_t", "alpha", "d_s")


def cmd_collapse(args):
    rows = sweep.read_rows_csv(resolve_input(args.input))
    points = sweep.collapse_curve(rows)
    if args.out:
        write_csv(args.out, COLLAPSE_COLUMNS, points)
        if (fig := _figure_path(args.out, args)) is not None:
            plotting.collapse(fig, points)
    else:
        _print_table(COLLAPSE_COLUMNS, points)
    return EXIT_OK


def cmd_sae_summary(args):
    paths = args.input or [data_path(f"sae_layer{k:02d}.json") for k in (8, 12, 16)]
    summaries = [saestats.summarize(saestats.load_sae_stats(resolve_input(p)), args.threshold)
                 for p in paths]
    rows = [(s.layer, s.n_alive, s.avg_l0, s.alpha, s.g, s.d_crit) for s in summaries]
    print(f"{'layer':>5} {'alive F':>8} {'avg L0':>7} {'alpha':>7} {'g':>6} {'d_crit':>7}")
    for s in summaries:
        print(f"{s.layer:>5} {s.n_alive:>8,} {s.avg_l0:>7.1f} {s.alpha:>7.4f} "
              f"{s.g:>6.2f} {s.d_crit:>7,.0f}")
    if args.out:
        write_csv(args.out, saestats.SUMMARY_COLUMNS, rows)
    return EXIT_OK


def cmd_calibrate(args):
    if args.b is not None and args.mode != "fixed-b":
        raise UsageError("--b is only valid with --mode fixed-b")
    data = cal.load_floor_dataset(resolve_input(args.input))
    if args.mode == "affine":
        fit = cal.fit_affine(data)
    elif args.mode == "origin":
        fit = cal.fit_origin(data)
    else:
        fit = cal.fit_fixed_b(data, args.b)
    print(cal.summary_text(data, fit), end="")
    if args.out:
        cal.write_report(data, fit, args.out)
        if (fig := _figure_path(args.out, args)) is not None:
            plotting.pred_vs_obs(fig, data.d_s, data.predicted, data.observed)
    if fit.flags:
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_powerfit(args):
    d, y = cal.load_width_observed(resolve_input(args.input))
    fit = cal.fit_power_law(d, y)
    p = fit.params
    print(f"observed = {p['a']:.3g} * d_s^-{p['gamma']:.3f} + {p['b']:.3g}  (R^2 = {fit.r_squared:.4f})")
    if args.out:
        write_csv(args.out, ("a", "gamma", "b", "r_squared"),
                  [(p["a"], p["gamma"], p["b"], fit.r_squared)])
    for flag in fit.flags:
        log.warning(flag)
    return EXIT_NUMERIC if fit.flags else EXIT_OK


def cmd_plot(args):
    kind, out = args.kind, args.out
    if kind == "capacity-curve":
        records = read_csv(resolve_input(args.input)) if args.input else None
        plotting.capacity_curve(out, records)
        return EXIT_OK
    if not args.input:
        raise UsageError(f"plot --kind {kind} needs --input")
    path = resolve_input(args.input)
    records = read_csv(path)
    if kind in ("floor-grid", "scatter"):
        plotting._require(records, sweep.CSV_COLUMNS, kind)
        rows = sweep.read_rows_csv(path)
        if kind == "floor-grid":
            plotting.floor_grid(out, rows)
        else:
            plotting.scatter(out, rows, args.threshold, args.log_space)
    elif kind == "collapse":
        plotting._require(records, ("width_ratio", "normalized_floor", "n", "d_t", "alpha", "d_s"), kind)
        points = [sweep.CollapsePoint(float(r["width_ratio"]), float(r["normalized_floor"]),
                                      float(r.get("normalized_std") or 0.0), int(r["n"]),
                                      int(r["d_t"]), float(r["alpha"]), int(r["d_s"]))
                  for r in records]
        plotting.collapse(out, points)
    else:
        plotting._require(records, ("d_s", "predicted", "observed"), kind)
        plotting.pred_vs_obs(out, [float(r["d_s"]) for r in records],
                             [float(r["predicted"]) for r in records],
                             [float(r["observed"]) for r in records])
    return EXIT_OK


# -- parser --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="floorcast", description=__doc__.splitlines()[0])
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(func=func)
        return p

    def out_flags(p, plot_help=None):
        p.add_argument("--out", help="output CSV path (written atomically)")
        if plot_help:
            p.add_argument("--plot", action="store_true", help=plot_help)

    p = add("capacity", cmd_capacity, "Capacity g(alpha) and critical width F/g(alpha).")
    p.add_argument("--alpha", type=_float_list, help="sparsity or comma list (default: reference table)")
    p.add_argument("--features", type=int, help="feature count F for the critical width")
    out_flags(p, "also render the capacity curve to <out>.svg")

    p = add("predict", cmd_predict, "Predicted loss floors at a list of student widths.")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="SAE stats JSON file (bundled names accepted)")
    src.add_argument("--features", type=int, help="toy setting: number of features")
    p.add_argument("--alpha", type=_float_list, help="toy setting: sparsity")
    p.add_argument("--importance", choices=("zipf", "power_law"), default="zipf",
                   help="toy setting: importance distribution (default zipf)")
    p.add_argument("--beta", type=float, help="power-law exponent for --importance power_law")
    p.add_argument("--widths", type=_int_list, help="comma list of student widths")
    p.add_argument("--threshold", type=float, default=saestats.DEFAULT_ALIVE_THRESHOLD,
                   help="alive-feature frequency threshold (default 1e-5)")
    p.add_argument("--observed", help="CSV with d_s,observed columns to join (calibrate-ready output)")
    out_flags(p, "also render predicted vs observed to <out>.svg")

    p = add("toy-sweep", cmd_toy_sweep, "Train the toy-model validation grid.")
    p.add_argument("--grid", default="default", help='grid file (key = value) or "default"')
    p.add_argument("--seeds", type=int, help="seeds per row (overrides the grid)")
    p.add_argument("--steps", type=int, help="training steps per run (overrides the grid)")
    p.add_argument("--out", required=True, help="results CSV")
    p.add_argument("--checkpoint", help="checkpoint CSV (default: <out stem>.ckpt.csv)")
    p.add_argument("--plot", action="store_true", help="also render the floor grid to <out>.svg")

    p = add("score", cmd_score, "Score predicted vs actual floors of a sweep.")
    p.add_argument("--input", required=True, help="sweep results CSV")
    p.add_argument("--threshold", type=float, default=sweep.DEFAULT_THRESHOLD,
                   help="keep rows with predicted floor above this (default 1e-4)")
    p.add_argument("--log-space", action="store_true", help="report log-space R^2 and plot log-log")
    p.add_argument("--heatmap", help="also write per-cell median accuracy CSV (needs --out)")
    out_flags(p, "also render the predicted-vs-actual scatter to <out>.svg")

    p = add("collapse", cmd_collapse, "Floors normalized by d_s=1, keyed by d_s/d_crit.")
    p.add_argument("--input", required=True, help="sweep results CSV")
    out_flags(p, "also render the collapse curve to <out>.svg")

    p = add("sae-summary", cmd_sae_summary, "Alive features, L0, alpha, g and d_crit per SAE file.")
    p.add_argument("--input", nargs="+", help="SAE stats JSON files (default: bundled layers)")
    p.add_argument("--threshold", type=float, default=saestats.DEFAULT_ALIVE_THRESHOLD,
                   help="alive-feature frequency threshold (default 1e-5)")
    out_flags(p)

    p = add("calibrate", cmd_calibrate, "Fit observed = C * predicted + B and decompose the floors.")
    p.add_argument("--input", required=True, help="CSV with d_s,predicted,observed columns")
    p.add_argument("--mode", choices=("affine", "origin", "fixed-b"), default="affine",
                   help="which calibration fit (default affine)")
    p.add_argument("--b", type=float, help="baseline for --mode fixed-b (default: largest-width control)")
    out_flags(p, "also render normalized predicted vs observed to <out>.svg")

    p = add("powerfit", cmd_powerfit, "Fit observed = a * d_s^-gamma + b.")
    p.add_argument("--input", required=True, help="CSV with d_s,observed columns")
    out_flags(p)

    p = add("plot", cmd_plot, "Render a figure from a CSV produced by another subcommand.")
    p.add_argument("--kind", required=True, choices=plotting.PLOT_KINDS, help="figure type")
    p.add_argument("--input", help="input CSV (optional for capacity-curve)")
    p.add_argument("--out", required=True, help="output image path (.svg, .pdf, .png)")
    p.add_argument("--threshold", type=float, default=sweep.DEFAULT_THRESHOLD,
                   help="scatter: keep rows with predicted floor above this")
    p.add_argument("--log-space", action="store_true", help="scatter: log-log axes")
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    log.info("resolved configuration: %s", json.dumps(resolved, default=str, sort_keys=True))
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except NumericError as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
