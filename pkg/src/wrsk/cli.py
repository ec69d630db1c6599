"""Command-line interface.

Subcommands: fit, select, simulate, compare, evaluate. Every run writes a
``manifest.json`` next to its outputs. Exit codes: 0 ok, 2 input error,
3 algorithmic error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .core import ClusterModel, FitConfig, fit
from .evaluation import EvalReport, evaluate
from .initialization import RobinParams
from .outlyingness import LofParams
from .selection import default_s_grid, gap_table, select_k
from .simgen import SimConfig, SimDataset, generate
from .studies import (
    METHODS,
    CompareRow,
    StudySetting,
    compare,
    replicate_configs,
    run_replicate,
    study_settings,
    summary_stats,
)

log = logging.getLogger("wrsk")

EXIT_OK, EXIT_INPUT, EXIT_ALGO = 0, 2, 3


class InputError(Exception):
    """Bad input file or argument; maps to exit code 2."""


# ---------------------------------------------------------------------------
# input / output helpers


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_matrix(path) -> tuple[np.ndarray, list[str] | None]:
    """Numeric CSV to a matrix; a first row with a non-numeric cell is a header."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8-sig")
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise InputError(f"{path}: no data")
    header = None
    first_line = 1
    if not all(_is_number(c) for c in rows[0]):
        header, rows = [c.strip() for c in rows[0]], rows[1:]
        first_line = 2
    if not rows:
        raise InputError(f"{path}: header only, no data rows")
    width = len(header) if header else len(rows[0])
    X = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        line = first_line + i
        if len(row) != width:
            raise InputError(f"{path}: row {line} has {len(row)} columns, expected {width}")
        for j, cell in enumerate(row):
            try:
                x = float(cell)
            except ValueError:
                raise InputError(
                    f"{path}: row {line}, column {j + 1}: cannot parse {cell.strip()!r} "
                    "as a number") from None
            if not math.isfinite(x):
                raise InputError(f"{path}: row {line}, column {j + 1}: non-finite value {cell!r}")
            X[i, j] = x
    return X, header


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _fmt(x) -> str:
    return repr(float(x))


def write_model(out: Path, model: ClusterModel, names: list[str] | None = None):
    """model.json, weights.csv (per observation) and variables.csv (per variable)."""
    _write_json(out / "model.json", model.to_dict())
    v1 = model.v if model.v1 is None else model.v1
    v2 = model.v if model.v2 is None else model.v2
    _write_csv(out / "weights.csv", ["observation", "cluster", "v", "v1", "v2", "outlier"],
               [[i + 1, int(a) + 1, _fmt(v), _fmt(a1), _fmt(a2), int(o)]
                for i, (a, v, a1, a2, o) in enumerate(zip(model.assignment, model.v, v1, v2,
                                                          model.outliers))])
    names = names or [f"V{j + 1}" for j in range(len(model.w))]
    _write_csv(out / "variables.csv", ["variable", "w"],
               [[nm, _fmt(w)] for nm, w in zip(names, model.w)])


def _manifest(out: Path, args, config: dict, inputs: list[str], start: float):
    _write_json(out / "manifest.json", {
        "command": args.command,
        "argv": getattr(args, "argv", None),
        "config": config,
        "seed": args.seed,
        "inputs": inputs,
        "out_dir": str(out),
        "version": __version__,
        "duration_seconds": round(time.perf_counter() - start, 3),
    })


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fit_config(args, k: int, s: float) -> FitConfig:
    return FitConfig(
        k=k, s=s, lloyd_max_iter=args.max_iter, outer_max_iter=args.outer_max_iter,
        w_tol=args.w_tol, outlier_cutoff=args.cutoff,
        lof_params=LofParams(q=args.lof_q, c=args.biweight_c),
        robin_params=RobinParams(q=args.lof_q), seed=args.seed,
    )


def _parse_grid(text: str | None, cast=float):
    if text is None:
        return None
    try:
        vals = [cast(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"cannot parse grid {text!r}") from None
    if not vals:
        raise InputError("empty grid")
    return vals


# ---------------------------------------------------------------------------
# commands


def cmd_fit(args) -> int:
    start = time.perf_counter()
    X, header = read_matrix(args.input)
    config = _fit_config(args, args.k, args.s)
    model = fit(X, config)
    out = _out_dir(args)
    write_model(out, model, header)
    _manifest(out, args, config.to_dict(), [str(args.input)], start)
    log.info("fit: k=%d s=%g objective=%.6g outliers=%d", model.k, model.s, model.objective,
             int(model.outliers.sum()))
    return EXIT_OK


def cmd_select(args) -> int:
    start = time.perf_counter()
    X, header = read_matrix(args.input)
    if args.k_min < 1 or args.k_max < args.k_min:
        raise InputError(f"invalid k range {args.k_min}..{args.k_max}")
    if args.permutations < 2:
        raise InputError("--permutations must be >= 2")
    k_grid = list(range(args.k_min, args.k_max + 1))
    s_grid = _parse_grid(args.s_grid) or default_s_grid(X.shape[1])
    base = _fit_config(args, k_grid[0], s_grid[0])
    table = gap_table(X, k_grid, s_grid, A=args.permutations, seed=args.seed,
                      options={"config": base}, jobs=args.jobs)
    k, s = select_k(table)
    model = fit(X, replace(base, k=k, s=s))
    out = _out_dir(args)
    (out / "gap_table.csv").write_text(table.to_csv(), encoding="utf-8")
    entry = table.entry(k, s)
    _write_json(out / "best.json", {"k": k, "s": s, "gap": entry.gap, "se": entry.se})
    write_model(out, model, header)
    config = {"fit": base.to_dict(), "k_grid": k_grid, "s_grid": s_grid,
              "permutations": args.permutations}
    _manifest(out, args, config, [str(args.input)], start)
    log.info("select: k*=%d s*=%g", k, s)
    return EXIT_OK


def _sim_settings(args):
    if args.config:
        try:
            cfg = SimConfig.from_dict(json.loads(Path(args.config).read_text()))
            cfg.validate()
        except (OSError, ValueError, TypeError) as exc:
            raise InputError(f"invalid simulation config {args.config}: {exc}") from exc
        k_min = getattr(args, "k_min", None) or 2
        k_max = getattr(args, "k_max", None) or 7
        return [StudySetting("config", cfg, list(range(k_min, k_max + 1)))]
    if args.study is None:
        raise InputError("give --study or --config")
    try:
        settings = study_settings(args.study, args.scale)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    k_min, k_max = getattr(args, "k_min", None), getattr(args, "k_max", None)
    for st in settings:
        if not st.known_k and (k_min or k_max):
            st.k_grid = list(range(k_min or st.k_grid[0], (k_max or st.k_grid[-1]) + 1))
    return settings


SUMMARY_HEADER = ["setting", "replicate", "dataset_seed", "method", "s", "alpha"]


def cmd_simulate(args) -> int:
    start = time.perf_counter()
    if args.replicates < 1:
        raise InputError("--replicates must be >= 1")
    if args.k_min is not None and args.k_max is not None and args.k_max < args.k_min:
        raise InputError(f"invalid k range {args.k_min}..{args.k_max}")
    if args.permutations < 2:
        raise InputError("--permutations must be >= 2")
    settings = _sim_settings(args)
    s_grid = _parse_grid(args.s_grid)
    out = _out_dir(args)
    rows = []
    selected = {}
    for i, r, cfg in replicate_configs(settings, args.replicates, args.seed):
        st = settings[i]
        log.info("simulate: setting %s replicate %d", st.label, r + 1)
        ds, results = run_replicate(st, cfg, args.permutations, args.seed, jobs=args.jobs,
                                    s_grid=s_grid)
        tag = st.label.replace("/", "-").replace("=", "").replace("%", "pct")
        ds.save(out / "datasets" / f"{i + 1:02d}_{tag}_r{r + 1:03d}")
        for method, report, s, alpha in results:
            rows.append((st.label, r + 1, cfg.seed, method, s, alpha, report))
            if not st.known_k:
                selected.setdefault(st.label, []).append(report.selected_k)
    _write_csv(out / "summary.csv", SUMMARY_HEADER + EvalReport.csv_header(),
               [[lab, r, sd, m, "" if s is None else _fmt(s), "" if a is None else _fmt(a)]
                + rep.csv_row() for lab, r, sd, m, s, a, rep in rows])
    stats_rows = []
    metrics = [f for f in EvalReport.csv_header() if f not in ("selected_k", "selected_s")]
    for st in settings:
        by_method: dict[str, list[EvalReport]] = {}
        for lab, _, _, m, _, _, rep in rows:
            if lab == st.label:
                by_method.setdefault(m, []).append(rep)
        for m, reps in by_method.items():
            for metric in metrics:
                d = summary_stats([getattr(rep, metric) for rep in reps])
                stats_rows.append([st.label, m, metric, d["count"], _fmt(d["mean"]),
                                   _fmt(d["median"]), _fmt(d["q1"]), _fmt(d["q3"])])
    _write_csv(out / "summary_stats.csv",
               ["setting", "method", "metric", "count", "mean", "median", "q1", "q3"], stats_rows)
    if selected:
        hist = [[st.label, k, selected[st.label].count(k)]
                for st in settings if st.label in selected for k in st.k_grid]
        _write_csv(out / "selected_k.csv", ["setting", "k", "count"], hist)
    config = {"settings": [{"label": st.label, "template": st.template.to_dict(),
                            "k_grid": st.k_grid, "known_k": st.known_k} for st in settings],
              "replicates": args.replicates, "scale": args.scale, "study": args.study,
              "permutations": args.permutations, "s_grid": s_grid}
    _manifest(out, args, config, [args.config] if args.config else [], start)
    return EXIT_OK


def _compare_data(args):
    """(X, labels, outlier truth, informative indices, k default, inputs)."""
    if args.input:
        p = Path(args.input)
        if p.is_dir():
            try:
                ds = SimDataset.load(p)
            except (OSError, ValueError, KeyError) as exc:
                raise InputError(f"cannot load dataset directory {p}: {exc}") from exc
            return ds.X, ds.labels, ds.outlier_flags, ds.informative_indices, ds.config.g, [str(p)]
        X, _ = read_matrix(p)
        return X, None, None, None, None, [str(p)]
    settings = _sim_settings(args)
    cfg = replace(settings[0].template, seed=args.seed)
    ds = generate(cfg)
    return ds.X, ds.labels, ds.outlier_flags, ds.informative_indices, cfg.g, []


def _check_methods(text: str) -> list[str]:
    methods = [m.strip().lower() for m in text.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown or not methods:
        raise InputError(f"unknown method(s) {', '.join(unknown) or '(none)'}; "
                         f"choose from {', '.join(METHODS)}")
    return methods


def cmd_compare(args) -> int:
    start = time.perf_counter()
    methods = _check_methods(args.methods)
    X, labels, truth, inf, k_default, inputs = _compare_data(args)
    k = args.k or k_default
    if k is None:
        raise InputError("--k is required for data without ground truth")
    rows = compare(X, k, methods, s=args.s, alpha=args.alpha, labels=labels,
                   outlier_truth=truth, informative_indices=inf,
                   s_grid=_parse_grid(args.s_grid), A=args.permutations, seed=args.seed,
                   jobs=args.jobs)
    out = _out_dir(args)
    _write_csv(out / "comparison.csv", CompareRow.csv_header(), [r.csv_row() for r in rows])
    config = {"methods": methods, "k": k, "s": args.s, "alpha": args.alpha,
              "s_grid": args.s_grid, "permutations": args.permutations,
              "study": args.study, "scale": args.scale, "sim_config": args.config}
    _manifest(out, args, config, inputs, start)
    return EXIT_OK


def _read_truth(args):
    """Labels, outlier flags and informative indices from --truth."""
    p = Path(args.truth)
    if p.is_dir():
        try:
            ds = SimDataset.load(p)
        except (OSError, ValueError, KeyError) as exc:
            raise InputError(f"cannot load dataset directory {p}: {exc}") from exc
        return ds.labels, ds.outlier_flags, ds.informative_indices
    labels, _ = read_matrix(p)
    flags = None
    if args.flags:
        f, _ = read_matrix(args.flags)
        flags = f.any(axis=1)
    inf = None
    if args.informative:
        inf = np.asarray(_parse_grid(args.informative, int)) - 1
    return labels[:, 0].astype(int), flags, inf


def cmd_evaluate(args) -> int:
    start = time.perf_counter()
    try:
        model = ClusterModel.from_dict(json.loads(Path(args.model).read_text()))
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"cannot load model {args.model}: {exc}") from exc
    labels, flags, inf = _read_truth(args)
    if len(labels) != len(model.assignment):
        raise InputError(f"truth has {len(labels)} rows, model has {len(model.assignment)}")
    report = evaluate(model, labels, flags, inf)
    out = _out_dir(args)
    _write_json(out / "evaluation.json", report.to_dict())
    (out / "evaluation.csv").write_text(report.to_csv(), encoding="utf-8")
    _manifest(out, args, {"model": args.model, "truth": args.truth, "flags": args.flags,
                          "informative": args.informative}, [args.model, args.truth], start)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="parallel workers for grid cells (default: CPU count)")
    p.add_argument("--out-dir", default=".", help="output directory (default: current)")
    p.add_argument("--verbose", "-v", action="store_true", help="progress on stderr")
    return p


def _fit_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("fit settings")
    g.add_argument("--lof-q", type=int, default=10, help="LOF neighborhood size")
    g.add_argument("--biweight-c", type=float, default=2.0, help="biweight upper knee")
    g.add_argument("--cutoff", type=float, default=0.5, help="outlier cutoff on v")
    g.add_argument("--max-iter", type=int, default=15, help="k-means rounds per outer step")
    g.add_argument("--outer-max-iter", type=int, default=20, help="outer iterations")
    g.add_argument("--w-tol", type=float, default=1e-4, help="variable-weight tolerance")


def _sim_flags(p: argparse.ArgumentParser):
    p.add_argument("--study", type=int, help="simulation preset 1, 2 or 3")
    p.add_argument("--config", help="SimConfig JSON file")
    p.add_argument("--scale", type=float, default=1.0,
                   help="shrink group sizes and dimensions by this factor")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(
        prog="wrsk", description="Weighted robust and sparse k-means clustering.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="fit one model at fixed k and s")
    p.add_argument("input", help="CSV file, rows are observations")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--s", type=float, required=True, help="l1 bound, in (1, sqrt(p)]")
    _fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select", parents=[common], help="choose k and s by the gap statistic")
    p.add_argument("input")
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=7)
    p.add_argument("--s-grid", help="comma-separated s values (default 1.1 to sqrt(p) by 0.5)")
    p.add_argument("--permutations", "-A", type=int, default=10)
    _fit_flags(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("simulate", parents=[common], help="run a simulation study")
    _sim_flags(p)
    p.add_argument("--replicates", type=int, default=10)
    p.add_argument("--permutations", "-A", type=int, default=10)
    p.add_argument("--s-grid", help="comma-separated s values (default 1.1 to sqrt(p) by 0.5)")
    p.add_argument("--k-min", type=int, help="smallest k searched (default 2)")
    p.add_argument("--k-max", type=int, help="largest k searched (default: study preset, "
                   "or 7 for --config)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", parents=[common], help="compare clustering methods")
    p.add_argument("input", nargs="?", help="CSV file or saved dataset directory")
    _sim_flags(p)
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--alpha", type=float, help="trimming level (default: true outlier share, "
                   "or 0.10 without ground truth)")
    p.add_argument("--k", type=int)
    p.add_argument("--s", type=float, help="fixed s for the sparse methods")
    p.add_argument("--s-grid")
    p.add_argument("--permutations", "-A", type=int, default=10)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("evaluate", parents=[common], help="score a saved model against truth")
    p.add_argument("model", help="model.json")
    p.add_argument("--truth", required=True, help="dataset directory or labels CSV")
    p.add_argument("--flags", help="CSV of outlier indicators (any nonzero column)")
    p.add_argument("--informative", help="comma-separated 1-based informative columns")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ALGO


if __name__ == "__main__":
    sys.exit(main())
