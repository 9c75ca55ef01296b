"""Command-line front end: ``rsp curve|invert|lo-example|optimize|simulate``.

Every output file carries a copy of the full configuration. Options may
also come from ``--config FILE`` holding ``key = value`` lines (keys are
option names with or without leading dashes; ``#`` starts a comment);
command-line flags take precedence.

Exit codes: 0 success, 1 bad usage or precondition, 2 numerical
non-convergence, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__, analytic, coding, optimizer
from .bloch import build_partition
from .errors import NumericalError, PreconditionError, ResourceError

DEFAULT_SEED = 1729

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NONCONVERGED = 2
EXIT_IO = 3

CSV_COLUMNS = ["lambda", "rate_bits", "entropy_bits", "b_bits", "e_ebits"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def write_atomic(path: str | None, text: str) -> None:
    """Write via a temp file and rename; ``None`` or ``-`` means stdout."""
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".rsp-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _clean(obj):
    """Make values JSON-safe: numpy scalars to Python, non-finite to null."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(payload) -> str:
    return json.dumps(_clean(payload), indent=2, sort_keys=False, allow_nan=False) + "\n"


def config_echo(args: argparse.Namespace) -> dict:
    skip = {"func", "config"}
    cfg = {k: v for k, v in vars(args).items() if k not in skip}
    cfg["version"] = __version__
    return cfg


def curve_csv(points, config: dict) -> str:
    buf = io.StringIO()
    for key, val in config.items():
        buf.write(f"# {key}={val}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for p in points:
        writer.writerow([repr(p.lam), repr(p.rate_bits), repr(p.entropy_bits),
                         repr(p.b_bits), repr(p.e_ebits)])
    return buf.getvalue()


def read_curve_csv(text: str) -> list[dict]:
    rows = [line for line in text.splitlines() if not line.startswith("#")]
    reader = csv.DictReader(rows)
    return [{k: float(v) for k, v in row.items()} for row in reader]


def curve_json(points, config: dict) -> str:
    return dump_json({
        "config": config,
        "points": [
            {"lambda": p.lam, "rate_bits": p.rate_bits, "entropy_bits": p.entropy_bits,
             "b_bits": p.b_bits, "e_ebits": p.e_ebits}
            for p in points
        ],
    })


def _ticks(lo, hi, count=5):
    span = hi - lo
    raw = span / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * span:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _panel(xs, ys, x0, y0, w, h, xlabel, ylabel, title, marker=None):
    xlo, xhi = min(xs), max(xs)
    ylo, yhi = min(ys), max(ys)
    if marker is not None:
        xlo, xhi = min(xlo, marker[0]), max(xhi, marker[0])
        ylo, yhi = min(ylo, marker[1]), max(yhi, marker[1])
    xlo, ylo = min(xlo, 0.0), min(ylo, 0.0)
    pad_x = 0.05 * (xhi - xlo or 1.0)
    pad_y = 0.05 * (yhi - ylo or 1.0)
    xhi += pad_x
    yhi += pad_y

    def sx(v):
        return x0 + (v - xlo) / (xhi - xlo) * w

    def sy(v):
        return y0 + h - (v - ylo) / (yhi - ylo) * h

    out = [f'<g font-family="sans-serif" font-size="11">',
           f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="black"/>',
           f'<text x="{x0 + w / 2}" y="{y0 - 10}" text-anchor="middle" font-size="13">{title}</text>',
           f'<text x="{x0 + w / 2}" y="{y0 + h + 36}" text-anchor="middle">{xlabel}</text>',
           f'<text x="{x0 - 42}" y="{y0 + h / 2}" text-anchor="middle" '
           f'transform="rotate(-90 {x0 - 42} {y0 + h / 2})">{ylabel}</text>']
    for t in _ticks(xlo, xhi):
        out.append(f'<line x1="{sx(t):.2f}" y1="{y0 + h}" x2="{sx(t):.2f}" y2="{y0 + h + 5}" stroke="black"/>')
        out.append(f'<text x="{sx(t):.2f}" y="{y0 + h + 18}" text-anchor="middle">{t:g}</text>')
    for t in _ticks(ylo, yhi):
        out.append(f'<line x1="{x0 - 5}" y1="{sy(t):.2f}" x2="{x0}" y2="{sy(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{x0 - 8}" y="{sy(t) + 4:.2f}" text-anchor="end">{t:g}</text>')
    pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(xs, ys))
    out.append(f'<polyline points="{pts}" fill="none" stroke="#1f4e9c" stroke-width="1.5" '
               f'stroke-dasharray="4 2"/>')
    if marker is not None:
        out.append(f'<circle cx="{sx(marker[0]):.2f}" cy="{sy(marker[1]):.2f}" r="3" fill="black"/>')
    out.append("</g>")
    return "\n".join(out)


def curve_svg(points, config: dict) -> str:
    s = [p.entropy_bits for p in points]
    r = [p.rate_bits for p in points]
    b = [p.b_bits for p in points]
    e = [p.e_ebits for p in points]
    desc = json.dumps(_clean(config), sort_keys=True).replace("&", "&amp;").replace("<", "&lt;")
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<svg xmlns="http://www.w3.org/2000/svg" width="900" height="420" viewBox="0 0 900 420">',
        f"<desc>{desc}</desc>",
        '<rect width="900" height="420" fill="white"/>',
        _panel(s, r, 80, 50, 320, 300, "entropy S (bits)", "rate R (bits)", "rate-entropy R(S)"),
        _panel(b, e, 530, 50, 320, 300, "b (bits per state)", "e (ebits per state)",
               "ebits vs bits", marker=(2.0, 1.0)),
        "</svg>",
    ]
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_curve(args) -> int:
    grid = analytic.lambda_grid(args.lambda_min, args.lambda_max, args.points)
    points = analytic.emit_curve(grid)
    cfg = config_echo(args)
    render = {"csv": curve_csv, "json": curve_json, "svg": curve_svg}[args.format]
    write_atomic(args.out, render(points, cfg))
    return EXIT_OK


def cmd_invert(args) -> int:
    lam = analytic.lambda_for_entropy(args.entropy)
    payload = {
        "config": config_echo(args),
        "lambda": lam,
        "rate_bits": analytic.rate_r1(lam),
        "entropy_bits": analytic.entropy_s(lam),
    }
    write_atomic(args.out, dump_json(payload))
    return EXIT_OK


def cmd_lo_example(args) -> int:
    res = coding.lo_hemisphere_example(args.samples, args.seed)
    payload = {"config": config_echo(args), **res.as_dict()}
    write_atomic(args.out, dump_json(payload))
    return EXIT_OK


def _parse_grid(text):
    try:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad multiplier grid {text!r}") from exc
    if not vals:
        raise UsageError("empty multiplier grid")
    return vals


def cmd_optimize(args) -> int:
    if (args.mu is None) == (args.mu_grid is None):
        raise UsageError("give exactly one of --mu or --mu-grid")
    if args.caps < 2 or args.tol <= 0 or args.max_iters < 1 or args.restarts < 1:
        raise PreconditionError("caps >= 2, tol > 0, max-iters >= 1, restarts >= 1 required")
    partition = build_partition(args.caps)
    mus = [args.mu] if args.mu is not None else _parse_grid(args.mu_grid)

    results = []
    if args.init == "random" and args.mu is None:
        reports = optimizer.sweep_multiplier(partition, mus, args.tol, args.max_iters,
                                             args.seed, args.restarts, workers=args.workers)
    else:
        reports = []
        for mu in mus:
            if args.init == "analytic":
                init = optimizer.discretize_analytic_channel(
                    partition, optimizer.lambda_for_multiplier(mu))
                reports.append(optimizer.fixed_point_solve(
                    partition, mu, init, args.tol, args.max_iters)[1])
            elif args.init == "uniform":
                reports.append(optimizer.fixed_point_solve(
                    partition, mu, "uniform", args.tol, args.max_iters)[1])
            else:
                reports.extend(optimizer.sweep_multiplier(
                    partition, [mu], args.tol, args.max_iters, args.seed, args.restarts))
    for rep in reports:
        row = rep.as_dict()
        row["curve_gap_bits"] = optimizer.curve_gap(rep)
        results.append(row)

    payload = {
        "config": config_echo(args),
        "cap_count": partition.cap_count,
        "diameter_bound": partition.diameter_bound,
        "results": results,
    }
    write_atomic(args.out, dump_json(payload))
    return EXIT_OK if all(r["converged"] for r in results) else EXIT_NONCONVERGED


def cmd_simulate(args) -> int:
    if args.caps < 2 or args.n < 1 or args.delta <= 0:
        raise PreconditionError("caps >= 2, n >= 1, delta > 0 required")
    rate = analytic.rate_r1(args.lam) + args.rate_margin
    # fail on the size guard before doing any work
    coding.codebook_size(args.n, rate)
    params = coding.TypicalityParams(args.delta, build_partition(args.caps), args.n)
    est = coding.estimate_posterior_entropy(
        args.lam, params, rate, args.samples, args.seed,
        typicality=args.typicality, workers=args.workers)
    payload = {
        "config": config_echo(args),
        "target_rate_bits": rate,
        "analytic_rate_bits": analytic.rate_r1(args.lam),
        "analytic_entropy_bits": analytic.entropy_s(args.lam),
        **est.as_dict(),
    }
    write_atomic(args.out, dump_json(payload))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _count(text):
    v = int(float(text))
    if v != float(text):
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    return v


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    common = _Parser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="key = value file supplying defaults for any option")
    parser = _Parser(prog="rsp", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    subs = {}

    p = sub.add_parser("curve", parents=[common], help="emit the closed-form tradeoff curve")
    p.add_argument("--lambda-min", type=float, default=analytic.DEFAULT_GRID[0])
    p.add_argument("--lambda-max", type=float, default=analytic.DEFAULT_GRID[1])
    p.add_argument("--points", type=_count, default=analytic.DEFAULT_GRID[2])
    p.add_argument("--format", choices=["csv", "json", "svg"], default="csv")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_curve)
    subs["curve"] = p

    p = sub.add_parser("invert", parents=[common], help="multiplier and rate for a target entropy")
    p.add_argument("--entropy", type=float, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_invert)
    subs["invert"] = p

    p = sub.add_parser("lo-example", parents=[common], help="hemisphere example, exact and sampled")
    p.add_argument("--samples", type=_count, default=1_000_000)
    p.add_argument("--seed", type=_u64, default=DEFAULT_SEED)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_lo_example)
    subs["lo-example"] = p

    p = sub.add_parser("optimize", parents=[common], help="solve the discretized minimization")
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--mu-grid", default=None, help="comma-separated increasing multipliers")
    p.add_argument("--caps", type=_count, default=optimizer.DEFAULT_CAPS)
    p.add_argument("--tol", type=float, default=optimizer.DEFAULT_TOL)
    p.add_argument("--max-iters", type=_count, default=optimizer.DEFAULT_MAX_ITERS)
    p.add_argument("--restarts", type=_count, default=optimizer.DEFAULT_RESTARTS)
    p.add_argument("--init", choices=["random", "uniform", "analytic"], default="random")
    p.add_argument("--workers", type=_count, default=1)
    p.add_argument("--seed", type=_u64, default=DEFAULT_SEED)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_optimize)
    subs["optimize"] = p

    p = sub.add_parser("simulate", parents=[common], help="random-codebook coding simulation")
    p.add_argument("--lambda", dest="lam", type=float, default=2.0)
    p.add_argument("--n", type=_count, default=8)
    p.add_argument("--rate-margin", type=float, default=0.2)
    p.add_argument("--caps", type=_count, default=48)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--samples", type=_count, default=100_000)
    p.add_argument("--typicality", choices=list(coding.TYPICALITY_KINDS), default="weak")
    p.add_argument("--workers", type=_count, default=1)
    p.add_argument("--seed", type=_u64, default=DEFAULT_SEED)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)
    subs["simulate"] = p
    return parser, subs


def read_config(path: str) -> dict:
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, val = (part.strip() for part in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            values["lam" if key == "lambda" else key] = val
    return values


def _apply_config(argv, parser, subs):
    pre = _Parser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = read_config(known.config)
    command = next((a for a in argv if a in subs), None)
    if command is None:
        return
    sp = subs[command]
    dests = {a.dest for a in sp._actions}
    unknown = sorted(set(values) - dests)
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
    sp.set_defaults(**values)
    # a value from the config satisfies a required option
    for action in sp._actions:
        if action.dest in values:
            action.required = False


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    try:
        _apply_config(argv, parser, subs)
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (PreconditionError, ResourceError) as exc:
        print(f"rsp: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"rsp: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except OSError as exc:
        print(f"rsp: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
