"""Command-line entry point: ``clampqp {solve,bench-qp,bench-mpc,mpc-demo}``."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import bench
from .layers import DEFAULT_GRID_POINTS, DEFAULT_SIGMA, build_penalty_grid, precompute_all
from .mpc import BoxLimits, LinearSystem, MpcWeights
from .problem import ProblemError, Status, load_problem
from .solver import SolverSettings, solve

EXIT_SOLVED = 0
EXIT_INPUT_ERROR = 1
EXIT_MAX_ITERS = 2

_DEFAULTS = SolverSettings()


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _fmt_vec(x: np.ndarray) -> str:
    return "[" + ", ".join(repr(float(v)) for v in x) + "]"


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eps-prim", type=float, default=_DEFAULTS.eps_prim,
                   help="primal residual tolerance (default: %(default)g)")
    p.add_argument("--eps-dual", type=float, default=_DEFAULTS.eps_dual,
                   help="dual residual tolerance (default: %(default)g)")
    p.add_argument("--max-iters", type=int, default=_DEFAULTS.max_iters,
                   help="iteration limit (default: %(default)d)")
    p.add_argument("--check-interval", type=int, default=_DEFAULTS.check_interval,
                   help="iterations between residual checks (default: %(default)d)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clampqp", description="Dense QP solver built on a fused clamp iteration.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a QP document")
    p.add_argument("file")
    _add_solver_flags(p)
    p.add_argument("--sigma", type=float, default=DEFAULT_SIGMA, help="proximal weight (default: %(default)g)")
    p.add_argument("--grid-points", type=int, default=DEFAULT_GRID_POINTS,
                   help="penalty grid size (default: %(default)d)")
    p.add_argument("--no-scaling", action="store_true", help="skip equilibration")

    p = sub.add_parser("bench-qp", help="random dense QP suite")
    p.add_argument("--sizes", type=_int_list, default=list(bench.DESK_QP_SIZES))
    p.add_argument("--seeds", type=int, default=10, help="number of seeds, 0..N-1 (default: %(default)d)")
    p.add_argument("--tol", type=float, default=_DEFAULTS.eps_prim, help="residual tolerance (default: %(default)g)")
    p.add_argument("--max-iters", type=int, default=_DEFAULTS.max_iters)
    p.add_argument("--full-scale", action="store_true", help="use the full size list up to n=2000")
    p.add_argument("--out", default="bench_qp.csv")

    p = sub.add_parser("bench-mpc", help="closed-loop random linear MPC suite")
    p.add_argument("--nu", type=_int_list, default=list(bench.DESK_MPC_SIZES))
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--horizon", type=int, default=40)
    p.add_argument("--iters-per-step", type=int, default=1)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--unstable", action="store_true", help="open-loop unstable systems")
    p.add_argument("--full-scale", action="store_true", help="use nu = 10, 14, ..., 50")
    p.add_argument("--out", default="bench_mpc.csv")

    p = sub.add_parser("mpc-demo", help="run one closed-loop MPC simulation and print a summary")
    p.add_argument("--system", choices=("double-integrator", "random"), default="double-integrator")
    p.add_argument("--horizon", type=int, default=40)
    p.add_argument("--nu", type=int, default=4, help="control dimension for --system random")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--iters-per-step", type=int, default=1)
    return parser


def cmd_solve(args) -> int:
    try:
        problem = load_problem(args.file)
        settings = SolverSettings(eps_prim=args.eps_prim, eps_dual=args.eps_dual,
                                  max_iters=args.max_iters,
                                  check_interval=min(args.check_interval, args.max_iters))
        cache = precompute_all(problem, build_penalty_grid(args.grid_points), args.sigma,
                               scale=not args.no_scaling)
    except FileNotFoundError:
        print(f"error: file not found: {args.file}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except (ProblemError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR

    rep = solve(problem, cache, settings)
    print(f"status: {rep.status.value}")
    print(f"iterations: {rep.iterations}")
    print(f"r_prim: {rep.r_prim!r}")
    print(f"r_dual: {rep.r_dual!r}")
    print(f"y: {_fmt_vec(rep.y)}")
    print(f"lambda: {_fmt_vec(rep.lam)}")
    return EXIT_SOLVED if rep.status is Status.SOLVED else EXIT_MAX_ITERS


def _summary(size, cell) -> None:
    ok = sum(r.converged for r in cell)
    iters = np.mean([r.iterations for r in cell])
    ms = np.mean([r.wall_ms for r in cell])
    print(f"size={size} converged={ok}/{len(cell)} mean_iters={iters:.1f} mean_ms={ms:.2f}")


def cmd_bench(args) -> int:
    if args.command == "bench-qp":
        config = bench.BenchConfig(suite="random-qp", sizes=tuple(args.sizes), seeds=tuple(range(args.seeds)),
                                   eps=args.tol, max_iters=args.max_iters, full_scale=args.full_scale,
                                   output=args.out)
    else:
        config = bench.BenchConfig(suite="random-mpc", sizes=tuple(args.nu), seeds=tuple(range(args.seeds)),
                                   horizon=args.horizon, iterations_per_step=args.iters_per_step,
                                   steps=args.steps, unstable=args.unstable, full_scale=args.full_scale,
                                   output=args.out)
    try:
        bench.run_suite(config, progress=_summary)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    print(f"wrote {args.out}")
    return 0


def cmd_mpc_demo(args) -> int:
    if args.system == "double-integrator":
        h = 0.1
        sys_ = LinearSystem(np.array([[1.0, h], [0.0, 1.0]]), np.array([[0.5 * h * h], [h]]))
        weights = MpcWeights(np.eye(2), 0.1 * np.eye(1), args.horizon)
        limits = BoxLimits.symmetric(1, 0.5)
        x0 = np.array([1.0, 0.0])
    else:
        sys_, weights, limits = bench.default_mpc_problem(args.nu, args.seed, args.horizon)
        x0 = bench.scale_initial_state(sys_, weights, limits, args.seed)
    traj, rec = bench.simulate_closed_loop(sys_, weights, limits, x0, args.steps, args.iters_per_step,
                                           seed=args.seed)
    print(f"system: {args.system} (nx={sys_.nx}, nu={sys_.nu}, horizon={args.horizon})")
    print(f"x0_inf_norm: {np.abs(x0).max()!r}")
    print(f"final_inf_norm: {np.abs(traj.states[-1]).max()!r}")
    print(f"steps_to_stabilize: {rec.steps_to_stabilize}")
    print(f"activity_fraction_first_50: {rec.activity_fraction!r}")
    print(f"total_iterations: {rec.iterations}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "solve":
        return cmd_solve(args)
    if args.command in ("bench-qp", "bench-mpc"):
        return cmd_bench(args)
    return cmd_mpc_demo(args)


if __name__ == "__main__":
    sys.exit(main())
