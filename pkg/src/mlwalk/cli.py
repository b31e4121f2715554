"""Command-line entry point ``mlwalk``.

Exit status: 0 success, 1 input error, 2 statistical test failed,
3 certification failed.
"""

from __future__ import annotations

import argparse
import functools
import json
import os
import sys
from pathlib import Path

import numpy as np

from mlwalk import certify as cert
from mlwalk.io import FORMATS, write_report
from mlwalk.levels import DEFAULT_CAP, sample_excursions_seeded, write_excursions_csv
from mlwalk.model import AnomalousParams, ModelParams, as_fraction, diffusion_constants, load_params, make_anomalous
from mlwalk.parallel import map_chunks
from mlwalk.rng import stream
from mlwalk.stats import (
    DEFAULT_THRESHOLD,
    TestReport,
    empirical_charfunc,
    excursion_tests,
    fclt_from_endpoints,
    sample_stationary_levels,
    scaling_from_positions,
)
from mlwalk.walk import endpoint_batch, evaluate_walk_at, position_batch, simulate_walk, write_trajectory_csv

__all__ = ["main", "parse_grid"]

EXIT_OK, EXIT_INPUT, EXIT_STAT, EXIT_CERT = 0, 1, 2, 3
OUTPUT_DIR_ENV = "MLWALK_OUTPUT_DIR"
# walkers per random stream; fixed so results do not depend on --workers
SAMPLE_CHUNK = 1 << 14
STOCHASTIC = {"simulate", "fclt", "scaling", "excursions", "charfunc"}


class InputError(Exception):
    pass


def parse_grid(text: str) -> list[int]:
    """``"1024..65536"`` (doubling) or a comma list ``"100,200,400"``.

    >>> parse_grid("1024..8192")
    [1024, 2048, 4096, 8192]
    """
    text = text.strip()
    if ".." in text:
        lo, hi = (int(x) for x in text.split(".."))
        if lo < 1 or hi < lo:
            raise InputError(f"bad grid range {text!r}")
        out = [lo]
        while out[-1] * 2 <= hi:
            out.append(out[-1] * 2)
        return out
    return [int(x) for x in text.split(",") if x.strip()]


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--params", help="JSON parameter document")
    common.add_argument("--config", help="JSON run configuration; its keys override flags")
    common.add_argument("--lambda", dest="lam", help="Lambda of the exponential-speed class")
    shape = common.add_mutually_exclusive_group()
    shape.add_argument("--alpha")
    shape.add_argument("--beta")
    common.add_argument("--seed", type=int)
    common.add_argument("--n", type=int)
    common.add_argument("--samples", type=int)
    common.add_argument("--grid")
    common.add_argument("--cap", type=int)
    common.add_argument("--precision", type=int)
    common.add_argument("--q", type=int, default=2)
    common.add_argument("--strict", action="store_true", help="use 1+1/B_minus in the outer certificate factors")
    common.add_argument("--out")
    common.add_argument("--format", choices=FORMATS)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--tolerance", type=float, help="p-value threshold (statistics) or slope tolerance (scaling)")

    p = argparse.ArgumentParser(prog="mlwalk", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="trajectory CSV of one walk")
    s.add_argument("--L0", type=int, default=0)
    s.add_argument("--times", help="comma list of absolute times to evaluate the walk at")
    sub.add_parser("fclt", parents=[common], help="endpoint test of the Brownian limit")
    sub.add_parser("scaling", parents=[common], help="median scaling exponent of M_n")
    e = sub.add_parser("excursions", parents=[common], help="excursion batch and its tests")
    e.add_argument("--csv", help="also write the excursion batch as CSV")
    c = sub.add_parser("charfunc", parents=[common], help="Monte Carlo vs fixed-point characteristic function")
    c.add_argument("--thetas", default="0.1,0.3,1.0")
    c2 = sub.add_parser("certify", parents=[common], help="certificate for one pair of lattice points")
    c2.add_argument("--k1", type=int)
    c2.add_argument("--k2", type=int)
    sub.add_parser("table", parents=[common], help="reproduce certificate table rows")
    return p


def _apply_config(args: argparse.Namespace) -> argparse.Namespace:
    if not args.config:
        return args
    with open(args.config) as fh:
        doc = json.load(fh)
    for key, value in doc.items():
        dest = "lam" if key == "lambda" else key.replace("-", "_")
        if not hasattr(args, dest):
            raise InputError(f"unknown config key {key!r}")
        setattr(args, dest, value)
    return args


def _spec(args) -> ModelParams | AnomalousParams:
    if args.params:
        return load_params(args.params)
    if args.lam is None:
        raise InputError("give --params or --lambda with --alpha/--beta")
    if args.alpha is not None:
        return AnomalousParams.from_alpha(str(args.lam), str(args.alpha))
    if args.beta is not None:
        return AnomalousParams.from_beta(str(args.lam), str(args.beta))
    raise InputError("--lambda needs --alpha or --beta")


def _anomalous(args) -> AnomalousParams:
    spec = _spec(args)
    if not isinstance(spec, AnomalousParams):
        raise InputError("this subcommand needs the exponential-speed class (--lambda with --alpha/--beta)")
    return spec


def _model(spec) -> ModelParams:
    return make_anomalous(spec) if isinstance(spec, AnomalousParams) else spec


def _need(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise InputError(f"--{name} is required for {args.command}")


def _output_path(args, ext: str) -> Path | None:
    if args.out:
        return Path(args.out)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base:
        return Path(base) / f"{args.command}.{ext}"
    return None


def _emit(args, report, default_fmt: str = "json") -> None:
    fmt = args.format or default_fmt
    path = _output_path(args, {"json": "json", "csv": "csv", "table": "txt"}[fmt])
    text = write_report(report, fmt, path)
    if path is None:
        sys.stdout.write(text)


# ---------------------------------------------------------------- subcommands


def _cmd_simulate(args) -> int:
    _need(args, "n")
    params = _model(_spec(args))
    sample = simulate_walk(params, args.n, args.L0, stream(args.seed, "simulate"))
    path = _output_path(args, "csv")
    if path is None:
        raise InputError("simulate writes a trajectory CSV; give --out or set " + OUTPUT_DIR_ENV)
    write_trajectory_csv(sample, path)
    if args.times:
        for t in _floats(args.times):
            pos, level = evaluate_walk_at(sample, t)
            print(t, " ".join(repr(float(x)) for x in pos), level)
    return EXIT_OK


def _endpoint_chunk(params, t, count, rng):
    L0 = sample_stationary_levels(params, count, rng)
    return endpoint_batch(params, t, count, rng, L0)


def _position_chunk(params, grid, count, rng):
    return position_batch(params, grid, count, rng, 0)


def _cmd_fclt(args) -> int:
    _need(args, "n", "samples")
    params = _model(_spec(args))
    if not diffusion_constants(params).finite:
        raise InputError(
            "the stationary variance v_bar = sum_l mu_l U_l^2 sigma_l^2 is infinite "
            "(finiteness condition violated, e.g. p_down/p_up <= Lambda^2 with U_l = Lambda^l); no Brownian limit to test"
        )
    func = functools.partial(_endpoint_chunk, params, float(args.n))
    parts = map_chunks(func, args.samples, args.seed, "fclt", SAMPLE_CHUNK, args.workers)
    report = fclt_from_endpoints(params, float(args.n), np.concatenate(parts), args.tolerance or DEFAULT_THRESHOLD)
    _emit(args, report)
    return EXIT_OK if report.passed else EXIT_STAT


def _cmd_scaling(args) -> int:
    _need(args, "grid", "samples")
    spec = _spec(args)
    grid = parse_grid(args.grid)
    func = functools.partial(_position_chunk, _model(spec), grid)
    parts = map_chunks(func, args.samples, args.seed, "scaling", SAMPLE_CHUNK, args.workers)
    report = scaling_from_positions(spec, grid, np.concatenate(parts, axis=1), stream(args.seed, "scaling", "bootstrap"),
                                    tolerance=args.tolerance)
    _emit(args, report)
    return EXIT_OK if report.passed else EXIT_STAT


def _cmd_excursions(args) -> int:
    _need(args, "samples")
    spec = _anomalous(args)
    batch = sample_excursions_seeded(spec, args.samples, args.seed, args.cap or DEFAULT_CAP, workers=args.workers)
    if args.csv:
        write_excursions_csv(batch, args.csv, args.seed)
    try:
        report = excursion_tests(batch, spec, args.tolerance or DEFAULT_THRESHOLD)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    _emit(args, report)
    return EXIT_OK if report.passed else EXIT_STAT


def _cmd_charfunc(args) -> int:
    _need(args, "samples")
    spec = _anomalous(args)
    thetas = _floats(args.thetas)
    batch = sample_excursions_seeded(spec, args.samples, args.seed, args.cap or DEFAULT_CAP, workers=args.workers)
    z = batch.z_value[batch.usable]
    phi, se = empirical_charfunc(z, thetas)
    rows, worst = [], 0.0
    for th, f, s in zip(thetas, phi, se):
        ref = complex(cert.phi_fixed_point(spec, th, 1e-12))
        dev = abs(f - ref) / s
        worst = max(worst, dev)
        rows.append({"theta": th, "mc_re": f.real, "mc_im": f.imag, "se": s, "fixed_re": ref.real,
                     "fixed_im": ref.imag, "deviation_se": dev})
    report = TestReport("charfunc", worst, 1.0, len(z), worst <= 3.0, {"points": rows})
    _emit(args, report)
    return EXIT_OK if report.passed else EXIT_STAT


def _cmd_certify(args) -> int:
    _need(args, "n")
    spec = _anomalous(args)
    lam = spec.integer_lambda
    k1, k2 = args.k1, args.k2
    if k1 is None or k2 is None:
        if lam not in cert.TABLE_K:
            raise InputError("--k1/--k2 are required unless Lambda is 2 or 3")
        k1, k2 = cert.TABLE_K[lam]
    inp = cert.CertInput(
        spec,
        cert.ThetaSpec(spec.lam, k1, args.n),
        cert.ThetaSpec(spec.lam, k2, args.n),
        q=args.q,
        precision=args.precision,
        convention="strict" if args.strict else "tabulated",
    )
    try:
        result = cert.certify_pair(inp)
    except cert.PsiDomainError as exc:
        print(f"certification failed: {exc}", file=sys.stderr)
        return EXIT_CERT
    _emit(args, result)
    return EXIT_OK if result.certified else EXIT_CERT


def _cmd_table(args) -> int:
    if args.lam is None:
        raise InputError("--lambda is required for table")
    lam = int(as_fraction(str(args.lam)))
    if lam not in cert.TABLE_BETAS:
        raise InputError("--lambda must be 2 or 3")
    betas = [str(args.beta)] if args.beta is not None else list(cert.TABLE_BETAS[lam])
    rows = []
    convention = "strict" if args.strict else "tabulated"
    for beta in betas:
        try:
            rows.append(cert.reproduce_table(lam, beta, cap=args.cap or 400, q=args.q, convention=convention))
        except RuntimeError as exc:
            print(str(exc), file=sys.stderr)
            return EXIT_CERT
    _emit(args, rows, "table")
    return EXIT_OK if all(r.result.certified for r in rows) else EXIT_CERT


COMMANDS = {
    "simulate": _cmd_simulate,
    "fclt": _cmd_fclt,
    "scaling": _cmd_scaling,
    "excursions": _cmd_excursions,
    "charfunc": _cmd_charfunc,
    "certify": _cmd_certify,
    "table": _cmd_table,
}


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        args = _apply_config(args)
        if args.command in STOCHASTIC and args.seed is None:
            raise InputError(f"--seed is required for {args.command}")
        return COMMANDS[args.command](args)
    except (InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
