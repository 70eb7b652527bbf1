"""Command-line interface: ``diracgraph {bands,zerosets,prob,validate}``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import ast
import csv
import io
import json
import math
import operator
import os
import sys
from pathlib import Path

from . import __version__
from .bands import DELTA_AVOID, DELTA_CROSS, GNUPLOT_TEMPLATE, compute_bands, detect_crossings, export_bands, summarize
from .cells import CellSpec
from .errors import (
    AssemblyError,
    DomainError,
    NonConvergenceError,
    NotAnEigenvalueError,
    ShapeError,
    UnsupportedReductionError,
)
from .secular import SecularSystem
from .torus import DEFAULT_TOL_Z, octant_reduction_check, probability, zero_set_curves
from .validate import format_table, run_checks

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2

# settings that may change how fast a run goes but never what it writes
NOT_IN_HEADER = ("threads", "out", "func", "plot_script")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- value parsing ------------------------------------------------------------------

_OPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.USub: operator.neg,
    ast.UAdd: operator.pos,
}


def parse_angle(text: str) -> float:
    """A number or a small arithmetic expression in ``pi``, e.g. ``-pi/2`` or ``0.25*pi``."""

    def ev(node):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError(text)

    try:
        value = ev(ast.parse(text.strip(), mode="eval").body)
    except (SyntaxError, ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number or pi expression: {text!r}") from None
    if not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"not finite: {text!r}")
    return value


def parse_alpha_list(text: str) -> list[float]:
    """``start:stop:count`` with both ends included."""
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected start:stop:count")
    start, stop = parse_angle(parts[0]), parse_angle(parts[1])
    try:
        count = int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"count must be an integer, got {parts[2]!r}") from None
    if count < 0:
        raise argparse.ArgumentTypeError("count must be nonnegative")
    if count == 1:
        return [start]
    return [start + (stop - start) * i / (count - 1) for i in range(count)]


def _positive(kind):
    def conv(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid {kind.__name__} value: {text!r}") from None
        if not v > 0 or (kind is float and not math.isfinite(v)):
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v

    conv.__name__ = kind.__name__
    return conv


def _nonnegative_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid int value: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {text}")
    return v


pos_float = _positive(float)
pos_int = _positive(int)


# -- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("geometry")
    g.add_argument("--topology", choices=("comb", "ladder", "loop", "custom"), default="comb")
    g.add_argument("--cell", type=Path, help="cell JSON file (required for --topology custom)")
    g.add_argument("--beta", type=pos_float, default=1.0, help="l1 = beta * l2 (default 1)")
    g.add_argument("--l1", type=pos_float, help="connecting bond length; overrides --beta")
    g.add_argument("--l2", type=pos_float, default=1.0, help="decoration length (default 1)")
    g.add_argument("--l3", type=pos_float, help="second loop arc (default l2)")
    o = common.add_argument_group("output")
    o.add_argument("--out", type=Path, help="output file (default: standard output)")
    o.add_argument("--format", choices=("csv", "json"), default="csv")
    o.add_argument("--threads", type=_nonnegative_int, default=1, help="worker threads, 0 = all cores")
    o.add_argument("--seed", type=_nonnegative_int, default=0)

    parser = _Parser(prog="diracgraph", description="Spectra of periodic Dirac quantum graphs.")
    parser.add_argument("--version", action="version", version=f"diracgraph {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("bands", parents=[common], help="band spectrum over the flux interval")
    b.add_argument("--alpha-steps", type=pos_int, default=201)
    b.add_argument("--k-max", type=pos_float, default=15.0)
    b.add_argument("--k-samples", type=pos_int, help="scan points in k (default scales with k_max)")
    b.add_argument("--tol", type=pos_float, default=1e-12, help="root width in k")
    b.add_argument("--delta-cross", type=pos_float, default=DELTA_CROSS)
    b.add_argument("--delta-avoid", type=pos_float, default=DELTA_AVOID)
    b.add_argument("--plot-script", action="store_true", help="write a gnuplot script next to --out")
    b.set_defaults(func=run_bands)

    z = sub.add_parser("zerosets", parents=[common], help="zero-set curves on the phase torus")
    z.add_argument("--alpha-list", type=parse_alpha_list, default=parse_alpha_list("0:pi:9"),
                   help="start:stop:count, 'pi' allowed (default 0:pi:9)")
    z.add_argument("--grid", type=pos_int, default=256)
    z.add_argument("--tol-z", type=pos_float, default=DEFAULT_TOL_Z)
    z.set_defaults(func=run_zerosets)

    p = sub.add_parser("prob", parents=[common], help="probability that a random k is in the spectrum")
    p.add_argument("--grid", type=pos_int, default=1024)
    p.add_argument("--tol-z", type=pos_float, default=DEFAULT_TOL_Z)
    p.add_argument("--method", choices=("grid", "monte_carlo"), default="grid")
    p.add_argument("--samples", type=pos_int, help="monte_carlo sample count (default grid^2)")
    p.set_defaults(func=run_prob)

    v = sub.add_parser("validate", parents=[common], help="run the self-check suite")
    v.add_argument("--mutate-current-sign", action="store_true", help=argparse.SUPPRESS)
    v.set_defaults(func=run_validate)
    return parser


# -- configuration --------------------------------------------------------------------


def make_system(args) -> SecularSystem:
    if args.topology == "custom":
        if args.cell is None:
            raise UsageError("--topology custom needs --cell")
        try:
            cell = CellSpec.load(args.cell)
        except OSError as exc:
            raise UsageError(f"cannot read cell file: {exc}") from exc
        return SecularSystem("custom", cell=cell)
    if args.cell is not None:
        raise UsageError("--cell is only valid with --topology custom")
    if args.l3 is not None and args.topology != "loop":
        raise UsageError("--l3 only applies to the loop")
    l1 = args.l1 if args.l1 is not None else args.beta * args.l2
    return SecularSystem(args.topology, l1=l1, l2=args.l2, l3=args.l3)


def resolved_config(args, sys: SecularSystem) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in NOT_IN_HEADER and v is not None}
    for key in ("beta", "l1", "l2", "l3", "cell"):
        cfg.pop(key, None)
    cfg["geometry"] = sys.describe()
    if sys.topology != "custom":
        cfg["geometry"]["beta"] = sys.l1 / sys.l2
    if "alpha_list" in cfg:
        cfg["alpha_list"] = list(cfg["alpha_list"])
    return cfg


def header(cfg: dict) -> str:
    return f"diracgraph {__version__} config={json.dumps(cfg, sort_keys=True)}"


def threads_of(args) -> int:
    return args.threads or os.cpu_count() or 1


def emit(args, text: str) -> None:
    if args.out is None:
        sys.stdout.write(text)
        return
    try:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise UsageError(f"cannot write {args.out}: {exc}") from exc


def report(args, text: str) -> None:
    """Human-readable summary; kept off standard output when data goes there."""
    print(text, file=sys.stdout if args.out is not None else sys.stderr)


# -- commands -------------------------------------------------------------------------


def run_bands(args, sys_: SecularSystem) -> int:
    if args.alpha_steps < 3:
        raise UsageError("--alpha-steps must be at least 3 for crossing detection")
    if not args.delta_cross < args.delta_avoid:
        raise UsageError("--delta-cross must be smaller than --delta-avoid")
    if args.plot_script and args.out is None:
        raise UsageError("--plot-script needs --out")
    cfg = resolved_config(args, sys_)
    bands = compute_bands(sys_, args.alpha_steps, args.k_max, args.tol, args.k_samples, threads_of(args))
    events = detect_crossings(bands, args.delta_cross, args.delta_avoid, tol=args.tol)
    emit(args, export_bands(bands, args.format, header(cfg)))
    if args.plot_script:
        script = args.out.with_suffix(".gp")
        script.write_text(GNUPLOT_TEMPLATE.format(data=args.out.name))
    counts = summarize(events)
    width = max((len(k) for k in bands.ks), default=0)
    lines = [
        f"bands: {width} (max per flux) over {len(bands.alpha_grid)} flux values, {sum(map(len, bands.ks))} points",
        f"events: {counts['crossing']} crossing, {counts['avoided']} avoided, {counts['unresolved']} unresolved",
    ]
    lines += [
        f"  {e.kind:<10} alpha={e.alpha:+.6f} k={e.k:.6f} bands={e.band_pair[0]},{e.band_pair[1]} gap={e.min_gap:.3e}"
        for e in events
    ]
    if bands.flat_intervals:
        lines.append(f"flat-band intervals: {len(bands.flat_intervals)}")
    report(args, "\n".join(lines))
    return EXIT_OK


def run_zerosets(args, sys_: SecularSystem) -> int:
    if not args.alpha_list:
        raise UsageError("--alpha-list is empty")
    if args.grid < 64:
        raise UsageError("--grid must be at least 64 for zero sets")
    sys_.check_torus()
    cfg = resolved_config(args, sys_)
    rows = []
    slices = []
    curve_id = 0
    for alpha in args.alpha_list:
        curves = zero_set_curves(sys_, alpha, args.grid, args.tol_z)
        for c in curves:
            for p in c.points:
                rows.append((alpha, p.kappa1, p.kappa2, curve_id, alpha / math.pi))
            curve_id += 1
        slices.append((alpha, len(curves)))
    columns = ("alpha", "kappa1", "kappa2", "curve_id", "color_index")
    if args.format == "csv":
        buf = io.StringIO()
        buf.write(f"# {header(cfg)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for a, k1, k2, cid, col in rows:
            w.writerow([format(a, ".17g"), format(k1, ".17g"), format(k2, ".17g"), cid, format(col, ".17g")])
        text = buf.getvalue()
    else:
        doc = {"comment": header(cfg), "columns": list(columns), "rows": [list(r) for r in rows]}
        text = json.dumps(doc, indent=1) + "\n"
    emit(args, text)
    lines = [f"zero sets: {len(slices)} flux values, {curve_id} curves, {len(rows)} points"]
    lines += [f"  alpha={a:.6f} curves={n}" for a, n in slices]
    report(args, "\n".join(lines))
    return EXIT_OK


def run_prob(args, sys_: SecularSystem) -> int:
    sys_.check_torus()
    if args.method == "grid" and args.grid < 128:
        raise UsageError("--grid must be at least 128 for the grid method")
    cfg = resolved_config(args, sys_)
    cfg.pop("format")  # the estimate is always JSON
    est = probability(sys_, args.grid, args.tol_z, args.method, args.seed, args.samples, threads_of(args))
    if args.method == "grid":
        est.symmetry_check, _, _ = octant_reduction_check(sys_, min(args.grid, 512), args.tol_z, full_p=est.p_sigma)
    doc = {"comment": header(cfg), **est.to_dict()}
    text = json.dumps(doc, indent=1, sort_keys=False) + "\n"
    emit(args, text)
    if args.out is not None:
        sys.stdout.write(text)
    return EXIT_OK


def run_validate(args, sys_: SecularSystem) -> int:
    cfg = resolved_config(args, sys_)
    sign = -1.0 if args.mutate_current_sign else 1.0
    checks = run_checks(sys_, seed=args.seed, flux_current_sign=sign)
    table = format_table(checks)
    if args.format == "json":
        doc = {
            "comment": header(cfg),
            "checks": [
                {"name": c.name, "status": c.status, "value": c.value, "limit": c.limit, "detail": c.detail}
                for c in checks
            ],
        }
        text = json.dumps(doc, indent=1) + "\n"
    else:
        text = f"# {header(cfg)}\n{table}\n"
    emit(args, text)
    if args.out is not None:
        print(table)
    failed = [c for c in checks if not c.ok]
    if failed:
        print(f"validation failed: {failed[0].name}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        sys_ = make_system(args)
        return args.func(args, sys_)
    except (UsageError, DomainError, AssemblyError, ShapeError, UnsupportedReductionError) as exc:
        print(f"diracgraph: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonConvergenceError, NotAnEigenvalueError, FloatingPointError, ArithmeticError) as exc:
        print(f"diracgraph: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
