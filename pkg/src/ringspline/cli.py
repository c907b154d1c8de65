"""Command-line front end: validation, moduli, seminorms, greedy approximation
and the experiment suite, with CSV/SVG outputs.

Exit codes: 0 success, 1 usage/config error, 2 failed validation verdict.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import experiments as X
from .approx import greedy_approx
from .geometry import GeometryError, parse_geometry, validate_ring, validation_csv
from .smoothness import (
    BesovParams,
    EstimatorConfig,
    besov_seminorm,
    modulus,
    modulus_curve_exact_pc,
)
from .splines import PiecewisePoly, lp_norm, spline_to_text
from .splines import _fmt

__all__ = ["main", "run", "emit_svg"]


class CLIError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError(message)


_KEY_TYPES = {
    "s": float,
    "p": float,
    "k": int,
    "seed": int,
    "threads": int,
    "n_max": int,
    "trials": int,
    "eps": float,
    "eps_list": str,
    "n_list": str,
    "t_list": str,
    "out_dir": str,
    "svg": lambda v: str(v).lower() in ("1", "true", "yes"),
    "target": str,
    "mode": str,
}


def _parse_number(tok: str) -> float:
    tok = tok.strip()
    if "^" in tok:
        base, expo = tok.split("^")
        return float(base) ** float(expo)
    return float(tok)


def _parse_list(text: str, cast=float):
    if text is None:
        return None
    toks = text.replace(",", " ").split()
    return [cast(t) if cast is not float else _parse_number(t) for t in toks]


def load_config(path: str) -> dict:
    """key=value config file; unknown keys are rejected."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CLIError(f"{path}:{lineno}: expected key=value")
            key, val = (t.strip() for t in line.split("=", 1))
            if key not in _KEY_TYPES:
                raise CLIError(f"{path}:{lineno}: unknown config key {key!r}")
            out[key] = _KEY_TYPES[key](val)
    return out


def _add_common(sp):
    sp.add_argument("--s", type=float, default=None)
    sp.add_argument("--p", type=float, default=None)
    sp.add_argument("--k", type=int, default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--n-max", dest="n_max", type=int, default=None)
    sp.add_argument("--trials", type=int, default=None)
    sp.add_argument("--eps", type=float, default=None)
    sp.add_argument("--eps-list", dest="eps_list", type=str, default=None)
    sp.add_argument("--n-list", dest="n_list", type=str, default=None)
    sp.add_argument("--t-list", dest="t_list", type=str, default=None)
    sp.add_argument("--target", type=str, default=None)
    sp.add_argument("--mode", type=str, default=None)
    sp.add_argument("--out-dir", dest="out_dir", type=str, default="out")
    sp.add_argument("--svg", action="store_true")
    sp.add_argument("--config", type=str, default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="ringspline",
                     description="ring-based nonlinear spline toolkit")
    sub = parser.add_subparsers(dest="command")
    for name in ("validate", "modulus", "besov", "approx", "experiment"):
        sp = sub.add_parser(name)
        if name == "validate":
            sp.add_argument("geomfile")
        if name == "experiment":
            sp.add_argument("which", choices=["jackson", "bernstein", "bv-bernstein",
                                              "inverse", "elongated", "discontinuous"])
        _add_common(sp)
    return parser


def _resolve_target(args, default="disk"):
    """Named fixtures: a spline or (callable, domain) plus metadata."""
    name = args.target or default
    eps = args.eps if args.eps is not None else 0.125
    if name == "elongated":
        spline = X.make_elongated(eps)
        return name, spline, spline.partition.omega, {"eps": eps}
    if name == "ramp":
        f, om = X.make_ramp()
        return name, f, om, {}
    if name == "ramp-cut":
        f, om = X.make_ramp_cut(eps)
        return name, f, om, {"eps": eps}
    if name == "disk":
        f, om = X.make_disk()
        return name, f, om, {"bv_reference": 2 * math.pi * 0.3}
    if name == "constant":
        from .geometry import ConvexPolygon, Ring, RingPartition
        from .splines import pc_from_partition, unit_square_domain

        part = RingPartition(unit_square_domain(),
                             (Ring(ConvexPolygon([(0, 0), (1, 0), (1, 1), (0, 1)])),))
        spline = pc_from_partition(part, [1.0])
        return name, spline, spline.partition.omega, {}
    raise CLIError(f"unknown target {name!r}")


def _params(args, k_default=1, s_default=1.0, p_default=2.0) -> BesovParams:
    try:
        return BesovParams(k=args.k if args.k is not None else k_default,
                           s=args.s if args.s is not None else s_default,
                           p=args.p if args.p is not None else p_default)
    except ValueError as exc:
        raise CLIError(str(exc)) from exc


def _write(path: str, text: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _echo_params(params: BesovParams, args):
    print(f"# config: s={_fmt(params.s)} p={_fmt(params.p)} tau={_fmt(params.tau)} "
          f"k={params.k} seed={args.seed} threads={args.threads}")


def emit_svg(report, path: str):
    """Log-log scatter with the fitted line, written as a plain-path SVG."""
    if report.plot is None or len(report.rows) < 2:
        raise ValueError("report needs a plot spec and at least 2 rows")
    xk, yk = report.plot["x"], report.plot["y"]
    xs = np.array([float(r[xk]) for r in report.rows])
    ys = np.array([float(r[yk]) for r in report.rows])
    keep = (xs > 0) & (ys > 0)
    xs, ys = xs[keep], ys[keep]
    if len(xs) < 2:
        raise ValueError("need at least 2 positive points to plot")
    lx, ly = np.log10(xs), np.log10(ys)
    W, H, M = 640, 480, 60
    x0, x1 = lx.min(), lx.max()
    y0, y1 = ly.min(), ly.max()
    if x1 - x0 < 1e-12:
        x1 = x0 + 1.0
    if y1 - y0 < 1e-12:
        y1 = y0 + 1.0

    def px(v):
        return M + (v - x0) / (x1 - x0) * (W - 2 * M)

    def py(v):
        return H - M - (v - y0) / (y1 - y0) * (H - 2 * M)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<line x1="{M}" y1="{H-M}" x2="{W-M}" y2="{H-M}" stroke="black"/>',
        f'<line x1="{M}" y1="{M}" x2="{M}" y2="{H-M}" stroke="black"/>',
    ]
    slope = report.plot.get("slope")
    intercept = report.plot.get("intercept")
    if slope is not None and intercept is not None:
        # fitted line in natural log: ln y = slope ln x + intercept
        X0, X1 = x0, x1
        ly0 = (slope * (X0 * math.log(10)) + intercept) / math.log(10)
        ly1 = (slope * (X1 * math.log(10)) + intercept) / math.log(10)
        parts.append(f'<line x1="{px(X0):.2f}" y1="{py(ly0):.2f}" '
                     f'x2="{px(X1):.2f}" y2="{py(ly1):.2f}" stroke="#888" '
                     f'stroke-dasharray="4 3"/>')
    for vx, vy in zip(lx, ly):
        parts.append(f'<circle cx="{px(vx):.2f}" cy="{py(vy):.2f}" r="4" '
                     f'fill="#1f6fb2"/>')
    p = report.params
    title = (f"{report.name}: s={p.get('s')} p={p.get('p')} "
             f"tau={_fmt(float(p.get('tau', float('nan'))))} k={p.get('k')}")
    parts.append(f'<text x="{M}" y="30" font-size="16" font-family="sans-serif">'
                 f"{title}</text>")
    if slope is not None:
        parts.append(f'<text x="{M}" y="48" font-size="13" '
                     f'font-family="sans-serif">log-log slope = {_fmt(slope)}'
                     f"</text>")
    parts.append(f'<text x="{W//2}" y="{H-20}" font-size="13" '
                 f'font-family="sans-serif">log10 {xk}</text>')
    parts.append(f'<text x="12" y="{H//2}" font-size="13" '
                 f'font-family="sans-serif" transform="rotate(-90 12 {H//2})">'
                 f"log10 {yk}</text>")
    parts.append("</svg>")
    _write(path, "\n".join(parts) + "\n")
    return path


def _cmd_validate(args) -> int:
    with open(args.geomfile, "r", encoding="utf-8") as fh:
        rings = parse_geometry(fh.read())
    reports = [validate_ring(r) for r in rings]
    csv = validation_csv(reports)
    out = os.path.join(args.out_dir, "validation.csv")
    _write(out, csv)
    ok = all(r.passed for r in reports)
    print(f"validated {len(rings)} rings -> {out}: {'pass' if ok else 'fail'}")
    return 0 if ok else 2


def _cmd_modulus(args) -> int:
    params = _params(args, k_default=1)
    _echo_params(params, args)
    name, target, omega, meta = _resolve_target(args, default="elongated")
    tlist = _parse_list(args.t_list)
    cfg = EstimatorConfig(seed=args.seed,
                          t_grid=tuple(tlist) if tlist else None)
    mode = args.mode or ("exact" if isinstance(target, PiecewisePoly) and params.k == 1
                         else "mc")
    if mode == "exact":
        curve = modulus_curve_exact_pc(target, params, cfg)
    else:
        curve = modulus(target, omega, params, cfg)
    out = os.path.join(args.out_dir, f"modulus_{name}.csv")
    _write(out, curve.to_csv())
    print(f"modulus curve ({mode}) -> {out}")
    return 0


def _cmd_besov(args) -> int:
    params = _params(args, k_default=1, s_default=0.5)
    _echo_params(params, args)
    name, target, omega, meta = _resolve_target(args, default="elongated")
    cfg = EstimatorConfig(seed=args.seed)
    mode = args.mode or ("exact" if isinstance(target, PiecewisePoly) and params.k == 1
                         else "mc")
    res = besov_seminorm(target, params, cfg, omega=omega, mode=mode)
    print(f"value={_fmt(res['value'])} tail_fraction={_fmt(res['tail_fraction'])} "
          f"stderr={_fmt(res['stderr'])}")
    lines = ["quantity,value,tail_fraction,stderr,seed",
             f"besov_seminorm,{_fmt(res['value'])},{_fmt(res['tail_fraction'])},"
             f"{_fmt(res['stderr'])},{args.seed}"]
    _write(os.path.join(args.out_dir, f"besov_{name}.csv"), "\n".join(lines) + "\n")
    return 0


def _cmd_approx(args) -> int:
    params = _params(args, k_default=1)
    _echo_params(params, args)
    name, target, omega, meta = _resolve_target(args, default="disk")
    n_max = args.n_max or 256
    trace = greedy_approx(target, n_max, k=params.k, p=params.p, seed=args.seed)
    out = os.path.join(args.out_dir, f"approx_{name}.csv")
    _write(out, trace.to_csv())
    final = trace.snapshots.get("final")
    if final is not None:
        _write(os.path.join(args.out_dir, f"approx_{name}_spline.txt"),
               spline_to_text(final))
    print(f"greedy trace ({len(trace.rows)} rows) -> {out}; "
          f"final error {_fmt(trace.rows[-1][1])}")
    return 0


def _default_eps_list(which):
    if which == "discontinuous":
        return [2.0**-m for m in range(3, 8)]
    return [2.0**-m for m in range(3, 9)]


def _cmd_experiment(args) -> int:
    which = args.which
    seed = args.seed
    if which == "jackson":
        params = _params(args, k_default=1, s_default=1.0)
        name, target, omega, meta = _resolve_target(args, default="disk")
        n_list = _parse_list(args.n_list, int) or [4, 8, 16, 32, 64, 128, 256, 512, 1024]
        report = X.run_jackson(target, params, n_list, seed=seed,
                               ref_seminorm=meta.get("bv_reference"))
    elif which == "bernstein":
        params = _params(args, k_default=1, s_default=0.5)
        n_list = _parse_list(args.n_list, int) or [8, 16, 32]
        report = X.run_bernstein(params, n_list, trials=args.trials or 20,
                                 seed=seed, threads=args.threads)
    elif which == "bv-bernstein":
        n_list = _parse_list(args.n_list, int) or [16, 64, 256]
        report = X.run_bv_bernstein(n_list, trials=args.trials or 100,
                                    seed=seed, threads=args.threads)
    elif which == "inverse":
        params = _params(args, k_default=1, s_default=1.0)
        name, target, omega, meta = _resolve_target(args, default="disk")
        n_list = _parse_list(args.n_list, int) or [4, 8, 16, 32, 64, 128, 256]
        report = X.run_inverse(target, params, n_list, seed=seed)
    elif which == "elongated":
        s = args.s if args.s is not None else 0.5
        p = args.p if args.p is not None else 2.0
        eps_list = _parse_list(args.eps_list) or _default_eps_list(which)
        report = X.counterexample_elongated(eps_list, s, p, seed=seed)
    elif which == "discontinuous":
        s = args.s if args.s is not None else 1.0
        p = args.p if args.p is not None else 2.0
        eps_list = _parse_list(args.eps_list) or _default_eps_list(which)
        report = X.counterexample_discontinuous(eps_list, s, p, seed=seed)
    else:  # pragma: no cover
        raise CLIError(f"unknown experiment {which!r}")
    tau = float(report.params.get("tau", float("nan")))
    print(f"# config: s={report.params.get('s')} p={report.params.get('p')} "
          f"tau={_fmt(tau)} k={report.params.get('k')} seed={seed} "
          f"threads={args.threads}")
    out = os.path.join(args.out_dir, f"{report.name}.csv")
    _write(out, report.to_csv())
    line = report.summary_line()
    _write(os.path.join(args.out_dir, f"{report.name}_summary.csv"), line + "\n")
    print(line)
    if args.svg:
        if report.plot is not None and len(report.rows) >= 2:
            svg = emit_svg(report, os.path.join(args.out_dir, f"{report.name}.svg"))
            print(f"plot -> {svg}")
        else:
            print("no plottable rows; svg skipped")
    return 0


def run(argv=None) -> int:
    parser = build_parser()
    try:
        ns, _ = parser.parse_known_args(argv)
        if getattr(ns, "config", None):
            cfg = load_config(ns.config)
            parser.set_defaults(**cfg)
        args = parser.parse_args(argv)
        if args.command is None:
            raise CLIError("missing command")
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "modulus":
            return _cmd_modulus(args)
        if args.command == "besov":
            return _cmd_besov(args)
        if args.command == "approx":
            return _cmd_approx(args)
        if args.command == "experiment":
            return _cmd_experiment(args)
        raise CLIError(f"unknown command {args.command!r}")
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (GeometryError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
