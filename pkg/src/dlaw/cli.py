"""Command-line entry point: ``dlaw <command> [options]``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import time
from fractions import Fraction

import numpy as np

from .errors import ConfigError, DlawError

EXPERIMENTS = {"dl": "dl", "clt": "clt", "fractal": "fractal", "rate": "rate",
               "corr": "correlation", "lemma51": "lemma51"}


def _theta(text: str):
    """'a/b' for a scalar, or rows separated by ';' and entries by ','."""
    from .norms import MatrixTheta, parse_rational
    rows = [r for r in text.split(";") if r.strip()]
    return MatrixTheta(tuple(tuple(parse_rational(x) for x in r.split(",")) for r in rows))


def _emit(rows, header, fmt, stream):
    if fmt == "json":
        json.dump([dict(zip(header, r)) for r in rows], stream, indent=1)
        stream.write("\n")
    else:
        stream.write(",".join(header) + "\n")
        for r in rows:
            stream.write(",".join(str(x) for x in r) + "\n")


def cmd_cf(args, out):
    from .cf import approx_coefficient, cf_expand, convergents
    from .norms import parse_rational, rational_str
    theta = parse_rational(args.theta)
    bound = parse_rational(args.error_bound) if args.error_bound else None
    cf = cf_expand(theta, args.terms, bound)
    conv = convergents(cf)
    rows = []
    for k, (a, (p, q)) in enumerate(zip(cf.quotients, conv.pairs)):
        rows.append([k, a, p, q, float(approx_coefficient(theta, p, q)), int(k <= cf.trusted_terms)])
    _emit(rows, ["k", "a_k", "p_k", "q_k", "coefficient", "trusted"], args.format, out)
    return 0


def _norms_from_args(args, m, n):
    from .norms import NormSpec
    if args.norm == "sup":
        return NormSpec("sup", m), NormSpec("sup", n)
    # euclidean balls are scaled so their volume is at least 2^d
    def scaled(d):
        vol = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
        s = Fraction(min(1.0, (vol / 2 ** d) ** (1 / d))).limit_denominator(1000)
        while vol / float(s) ** d < 2 ** d:
            s -= Fraction(1, 1000)
        return NormSpec("euclidean", d, s)
    return scaled(m), scaled(n)


def cmd_best(args, out):
    from .best_approx import enumerate_best
    from .norms import rational_str
    theta = _theta(args.theta)
    norms = _norms_from_args(args, theta.m, theta.n)
    seq = enumerate_best(theta, args.T, norms)
    rows = [[" ".join(map(str, b.p)), " ".join(map(str, b.q)), b.rnorm, b.qnorm,
             b.coefficient(theta.m, theta.n)] for b in seq]
    _emit(rows, ["p", "q", "rnorm", "qnorm", "coefficient"], args.format, out)
    return 0


def cmd_nu(args, out):
    from .reference import DL_CDF_HALF, DL_MEAN, nu_cdf, nu_density, nu_functional
    grid = np.linspace(0, 1, args.grid)
    rows = [[float(z), float(nu_density(z)), float(nu_cdf(z))] for z in grid]
    _emit(rows, ["z", "density", "cdf"], args.format, out)
    if args.format != "json":
        out.write(f"# mean {nu_functional(lambda z: z):.12f} (1/(4 ln 2) = {DL_MEAN:.12f})\n")
        out.write(f"# cdf(1/2) {DL_CDF_HALF:.12f}\n")
    return 0


_INLINE = ("m", "n", "observable", "horizon", "trials", "measure", "bits", "cutoff",
           "eps", "r", "samples", "probe", "threads", "seed", "out")


def _experiment_config(args, mode):
    from .experiments import RunConfig
    from .io import load_config
    if args.config:
        cfg = load_config(args.config)
        if cfg.mode != mode:
            raise ConfigError(f"config mode {cfg.mode!r} does not match command {mode!r}")
    else:
        cfg = RunConfig(mode)
    changes = {k: getattr(args, k) for k in _INLINE if getattr(args, k, None) is not None}
    if getattr(args, "grid", None):
        changes["grid"] = tuple(float(x) for x in args.grid.split(","))
    if args.no_timing:
        changes["timing"] = False
    if changes:
        cfg = dataclasses.replace(cfg, **changes)
    return cfg


def cmd_experiment(args, out, mode):
    from .experiments import run
    from .io import _jsonable, write_run
    cfg = _experiment_config(args, mode)
    started = time.time()
    result = run(cfg)
    if cfg.out:
        write_run(result, cfg.out, args.format, started)
    summary = {k: v for k, v in result.summary.items() if k != "ecdf"}
    json.dump(_jsonable(summary), out, indent=1)
    out.write("\n")
    if mode == "lemma51" and result.failures:
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dlaw", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None)

    sp = sub.add_parser("cf", help="continued fraction, convergents and coefficients")
    sp.add_argument("--theta", required=True, help="rational as num/den")
    sp.add_argument("--terms", type=int, default=None)
    sp.add_argument("--error-bound", default=None)
    common(sp)

    sp = sub.add_parser("best", help="best approximations of a matrix theta")
    sp.add_argument("--theta", required=True, help="rows ';'-separated, entries ','-separated")
    sp.add_argument("--T", type=float, required=True, help="scan ||q|| < e^T")
    sp.add_argument("--norm", choices=("sup", "euclidean"), default="sup")
    common(sp)

    sp = sub.add_parser("nu", help="density and CDF table of the limit law")
    sp.add_argument("--grid", type=int, default=11)
    common(sp)

    for name, mode in EXPERIMENTS.items():
        sp = sub.add_parser(name, help=f"run the {mode} experiment")
        sp.add_argument("--config", default=None)
        sp.add_argument("--m", type=int)
        sp.add_argument("--n", type=int)
        sp.add_argument("--observable")
        sp.add_argument("--horizon", type=int)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--measure")
        sp.add_argument("--bits", type=int)
        sp.add_argument("--cutoff", type=int)
        sp.add_argument("--eps", type=float)
        sp.add_argument("--r", type=int)
        sp.add_argument("--samples", type=int)
        sp.add_argument("--probe", choices=("bump", "const"))
        sp.add_argument("--grid", default=None, help="comma-separated flow times")
        sp.add_argument("--no-timing", action="store_true", help="record wall_ms as 0")
        common(sp)
    return p


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "cf":
            return cmd_cf(args, out)
        if args.command == "best":
            return cmd_best(args, out)
        if args.command == "nu":
            return cmd_nu(args, out)
        return cmd_experiment(args, out, EXPERIMENTS[args.command])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DlawError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
