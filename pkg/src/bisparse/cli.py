"""Command-line front end: project / measure / recover / rip / bench.

All stochastic subcommands require an explicit --seed; every run echoes the
resolved seed on stderr.  Exit codes: 0 success, 2 usage or input error,
1 numerical failure (non-convergence under --strict).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import bench, measurements, projections, recovery
from .symcore import read_matrix, write_matrix

PROJECT_OPS = (
    "exact",
    "tail-bisparse",
    "tail-joint",
    "head-square",
    "head-rowcol",
    "head-anchor",
    "head-psd",
    "head-joint",
    "head-square-variant",
    "head-shrink",
    "hierarchical",
)


def _open_in(path):
    return sys.stdin if path == "-" else open(path, "r")


def _open_out(path):
    return sys.stdout if path == "-" else open(path, "w")


def _echo_seed(seed) -> None:
    print(f"# seed {seed if seed is not None else 'none'}", file=sys.stderr)


def _parse_support(text: str) -> np.ndarray:
    # CLI supports are 1-based, matching the text output format
    return np.array([int(tok) - 1 for tok in text.split(",") if tok.strip()], dtype=int)


def _write_outcome(outcome, stream) -> None:
    stream.write(" ".join(str(i + 1) for i in outcome.support) + "\n")
    stream.write(format(outcome.objective, ".17g") + "\n")
    write_matrix(outcome.matrix, stream)


def _cmd_project(args) -> int:
    _echo_seed(None)
    with _open_in(args.input) as fh:
        mat = read_matrix(fh)
    op = args.op
    if op == "exact":
        outcome = projections.exact_project(mat, args.s, args.r)
    elif op == "tail-bisparse":
        outcome = projections.tail_bisparse(mat, args.s)
    elif op == "tail-joint":
        outcome = projections.tail_joint(mat, args.s, args.r)
    elif op == "head-square":
        outcome = projections.head_square(mat, args.s)
    elif op == "head-rowcol":
        outcome = projections.head_rowcol(mat, args.s)
    elif op == "head-anchor":
        outcome = projections.head_anchor(mat, args.s)
    elif op == "head-psd":
        outcome = projections.head_psd_lowrank(mat, args.s, rank_override=args.r)
    elif op == "head-joint":
        outcome = projections.head_joint(mat, args.s, args.r)
    elif op == "head-square-variant":
        outcome = projections.head_square_variant(mat, args.s, args.r)
    elif op == "head-shrink":
        if args.sprime is None:
            raise ValueError("head-shrink needs --sprime")
        outcome = projections.head_shrink(mat, _parse_support(args.sprime), args.s)
    else:
        out = projections.project_hierarchical(mat, args.s, args.t if args.t else args.s)
        support = np.nonzero(np.any(out != 0.0, axis=0))[0]
        outcome = projections.ProjectionOutcome(
            out, support, support.size, float(np.linalg.norm(out))
        )
    with _open_out(args.output) as fh:
        _write_outcome(outcome, fh)
    return 0


def _cmd_measure(args) -> int:
    _echo_seed(args.seed)
    with _open_in(args.input) as fh:
        mat = read_matrix(fh)
    mp = measurements.sample_map(
        args.kind, mat.shape[0], args.m, p=args.p, seed=args.seed,
        inner=args.inner, scale=args.scale,
    )
    y = mp.apply(mat)
    with _open_out(args.output) as fh:
        measurements.write_measurement_file(mp, y, fh)
    return 0


def _cmd_recover(args) -> int:
    _echo_seed(args.seed)
    with _open_in(args.input) as fh:
        mp, y = measurements.read_measurement_file(fh)
    cfg = recovery.RecoveryConfig(
        max_iters=args.max_iters,
        tol_residual=args.tol,
        head_choice=args.head,
        step_beta=args.beta,
    )
    if args.algo == "exact-iht":
        result = recovery.iht_exact(mp, y, args.s, args.r, cfg)
    elif args.algo == "head-tail":
        result = recovery.iht_head_tail(mp, y, args.s, args.r, cfg)
    elif args.algo == "rank-one":
        result = recovery.iht_rank_one(mp, y, args.s, args.r, cfg)
    elif args.algo == "two-step":
        result = recovery.two_step_factorized(mp, y, args.s, args.r, cfg)
    else:
        result = recovery.brute_force_decode(mp, y, args.s, args.r)
    final_res = result.residual_trace[-1] if result.residual_trace else float("nan")
    with _open_out(args.output) as fh:
        fh.write(f"converged {int(result.converged)}\n")
        fh.write(f"iterations {result.iterations}\n")
        fh.write(f"residual {format(final_res, '.17g')}\n")
        fh.write("support " + " ".join(str(i + 1) for i in result.support) + "\n")
        write_matrix(result.estimate, fh)
    if args.strict and not result.converged:
        print("error: solver did not converge", file=sys.stderr)
        return 1
    return 0


def _cmd_rip(args) -> int:
    _echo_seed(args.seed)
    mp = measurements.sample_map(
        args.ensemble, args.n, args.m, p=args.p, seed=args.seed,
        inner=args.inner, scale=args.scale,
    )
    est = measurements.estimate_rip(mp, args.s, args.r, args.trials,
                                    mode=args.mode, seed=args.seed)
    with _open_out(args.output) as fh:
        fh.write(f"mode {est.mode}\n")
        fh.write(f"trials {est.trials}\n")
        fh.write(f"delta_lower {format(est.delta_lower, '.17g')}\n")
        fh.write(f"alpha_hat {format(est.alpha_hat, '.17g')}\n")
        fh.write(f"beta_hat {format(est.beta_hat, '.17g')}\n")
        if args.cross_term:
            delta = args.delta if args.delta is not None else est.delta_lower
            report = measurements.check_rip_cross_term(
                mp, args.s, args.r, args.trials, delta, seed=args.seed
            )
            fh.write(f"cross_worst {format(report.worst_ratio, '.17g')}\n")
            fh.write(f"cross_within {int(report.within)}\n")
    return 0


def _cmd_bench(args) -> int:
    _echo_seed(args.seed)
    with _open_in(args.spec) as fh:
        spec = bench.parse_spec(fh)
    if args.seed is not None:
        spec.base_seed = args.seed
    if args.mode == "phase":
        records = bench.run_phase_transition(spec, threads=args.threads)
        with _open_out(args.output) as fh:
            bench.write_csv(records, fh, timing=args.timing)
        if args.aggregate:
            with open(args.aggregate, "w") as fh:
                bench.write_aggregate_csv(bench.aggregate(records), fh)
    else:
        rows = bench.run_rip_sweep(spec, mode=args.rip_mode)
        with _open_out(args.output) as fh:
            bench.write_rip_csv(rows, fh)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bisparse",
        description="Projections, measurement maps and recovery of jointly "
        "low-rank and bisparse symmetric matrices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_proj = sub.add_parser("project", help="apply a projection to a matrix")
    p_proj.add_argument("--op", required=True, choices=PROJECT_OPS)
    p_proj.add_argument("--s", type=int, required=True, help="sparsity level")
    p_proj.add_argument("--r", type=int, default=None, help="rank bound")
    p_proj.add_argument("--t", type=int, default=None, help="per-column sparsity (hierarchical)")
    p_proj.add_argument("--sprime", default=None,
                        help="comma-separated 1-based support (head-shrink)")
    p_proj.add_argument("--input", default="-", help="matrix file (default stdin)")
    p_proj.add_argument("--output", default="-", help="output file (default stdout)")
    p_proj.set_defaults(func=_cmd_project)

    p_meas = sub.add_parser("measure", help="sample a map and measure a matrix")
    p_meas.add_argument("--kind", required=True, choices=measurements.KINDS)
    p_meas.add_argument("--m", type=int, required=True, help="number of measurements")
    p_meas.add_argument("--p", type=int, default=None, help="inner dimension (factorized)")
    p_meas.add_argument("--inner", default="dense", choices=measurements.INNER_KINDS)
    p_meas.add_argument("--scale", default="inv_m", choices=measurements.SCALES)
    p_meas.add_argument("--seed", type=int, required=True)
    p_meas.add_argument("--input", default="-", help="matrix file (default stdin)")
    p_meas.add_argument("--output", default="-")
    p_meas.set_defaults(func=_cmd_measure)

    p_rec = sub.add_parser("recover", help="recover a matrix from a measurement file")
    p_rec.add_argument("--algo", required=True,
                       choices=("exact-iht", "head-tail", "rank-one", "two-step", "brute"))
    p_rec.add_argument("--s", type=int, required=True)
    p_rec.add_argument("--r", type=int, required=True)
    p_rec.add_argument("--max-iters", type=int, default=500)
    p_rec.add_argument("--tol", type=float, default=1e-9)
    p_rec.add_argument("--head", default="square", choices=recovery.HEAD_CHOICES)
    p_rec.add_argument("--beta", type=float, default=None, help="l1 step normalizer")
    p_rec.add_argument("--seed", type=int, required=True)
    p_rec.add_argument("--strict", action="store_true",
                       help="exit 1 when the solver does not converge")
    p_rec.add_argument("--input", default="-", help="measurement file (default stdin)")
    p_rec.add_argument("--output", default="-")
    p_rec.set_defaults(func=_cmd_recover)

    p_rip = sub.add_parser("rip", help="estimate restricted-isometry statistics")
    p_rip.add_argument("--ensemble", required=True, choices=measurements.KINDS)
    p_rip.add_argument("--n", type=int, required=True)
    p_rip.add_argument("--m", type=int, required=True)
    p_rip.add_argument("--p", type=int, default=None)
    p_rip.add_argument("--inner", default="dense", choices=measurements.INNER_KINDS)
    p_rip.add_argument("--scale", default="inv_m", choices=measurements.SCALES)
    p_rip.add_argument("--s", type=int, required=True)
    p_rip.add_argument("--r", type=int, required=True)
    p_rip.add_argument("--trials", type=int, default=200)
    p_rip.add_argument("--mode", default="l2", choices=("l2", "l1"))
    p_rip.add_argument("--cross-term", action="store_true",
                       help="also report the worst cross-term ratio")
    p_rip.add_argument("--delta", type=float, default=None,
                       help="delta to compare the cross-term ratio against")
    p_rip.add_argument("--seed", type=int, required=True)
    p_rip.add_argument("--output", default="-")
    p_rip.set_defaults(func=_cmd_rip)

    p_bench = sub.add_parser("bench", help="run a benchmark sweep from a spec file")
    p_bench.add_argument("--spec", required=True, help="spec file path ('-' for stdin)")
    p_bench.add_argument("--mode", default="phase", choices=("phase", "rip"))
    p_bench.add_argument("--rip-mode", default="l2", choices=("l2", "l1"))
    p_bench.add_argument("--seed", type=int, default=None,
                         help="override the spec's base_seed")
    p_bench.add_argument("--threads", type=int, default=1)
    p_bench.add_argument("--timing", action="store_true",
                         help="write measured wall times (breaks byte reproducibility)")
    p_bench.add_argument("--output", default="-", help="CSV output (default stdout)")
    p_bench.add_argument("--aggregate", default=None, help="also write per-cell aggregates")
    p_bench.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 0
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except np.linalg.LinAlgError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
