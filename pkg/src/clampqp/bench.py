"""Random problem suites and closed-loop MPC simulation."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .layers import DEFAULT_SIGMA, build_penalty_grid, precompute_all
from .mpc import (BoxLimits, CondensedTemplate, LinearSystem, MpcWeights,
                  build_condensed_mpc, instantiate, recover_trajectory, spectral_radius)
from .problem import QProblem, Status, validate
from .solver import SolverSettings, fixed_iters, solve

log = logging.getLogger(__name__)

CSV_COLUMNS = ("suite", "n_or_nu", "seed", "iterations", "r_prim", "r_dual", "converged",
               "wall_ms", "steps_to_stabilize", "activity_fraction")

STABLE_TOL = 1e-2
DIVERGED = 1e6
DESK_QP_SIZES = (10, 50, 200)
FULL_QP_SIZES = (10, 18, 32, 58, 105, 190, 342, 616, 1110, 2000)
DESK_MPC_SIZES = (4, 10)
FULL_MPC_SIZES = tuple(range(10, 51, 4))


class ControllabilityError(RuntimeError):
    pass


def gen_random_dense_qp(n: int, seed: int, *, return_witness: bool = False):
    """Random strictly convex QP with ``n // 4`` equality and ``n // 4`` inequality rows.

    Both kinds of row are built around a sampled point ``y0`` so the
    problem is feasible; inequality slack is ``|N(0, 1)| + 0.1``.
    """
    if n < 4:
        raise ValueError("random QPs need n >= 4")
    rng = np.random.default_rng(seed)
    k = n // 4
    M = rng.standard_normal((n, n))
    H = M.T @ M + 0.1 * np.eye(n)
    H = 0.5 * (H + H.T)
    g = rng.standard_normal(n)
    y0 = rng.standard_normal(n)
    G = rng.standard_normal((2 * k, n))
    Gy0 = G @ y0
    slack = np.abs(rng.standard_normal(k)) + 0.1
    c = np.concatenate([Gy0[:k], Gy0[k:] - slack])
    d = np.concatenate([Gy0[:k], Gy0[k:] + slack])
    p = validate(H, g, G, c, d)
    return (p, y0) if return_witness else p


def gen_random_linear_system(nu: int, seed: int, unstable: bool = True, *, max_tries: int = 10) -> LinearSystem:
    """Random controllable ``(A, B)`` with ``nx = 3 nu``.

    ``A`` is rescaled to a spectral radius drawn from [1.05, 1.3] when
    ``unstable`` and from [0.8, 0.95] otherwise.
    """
    if nu < 1:
        raise ValueError("nu must be >= 1")
    nx = 3 * nu
    rng = np.random.default_rng(seed)
    lo, hi = (1.05, 1.3) if unstable else (0.8, 0.95)
    for _ in range(max_tries):
        A = rng.standard_normal((nx, nx))
        A *= rng.uniform(lo, hi) / spectral_radius(A)
        B = rng.standard_normal((nx, nu))
        sys = LinearSystem(A, B)
        if sys.is_controllable():
            return sys
    raise ControllabilityError(f"no controllable system after {max_tries} draws (nu={nu}, seed={seed})")


@dataclass
class RunRecord:
    suite: str
    size: int
    seed: int
    iterations: int
    r_prim: float
    r_dual: float
    converged: bool
    wall_ms: float
    steps_to_stabilize: int | None = None
    activity_fraction: float | None = None

    def row(self) -> list[str]:
        def num(x):
            return "" if x is None else repr(float(x))
        return [self.suite, str(self.size), str(self.seed), str(self.iterations),
                num(self.r_prim), num(self.r_dual), str(int(self.converged)),
                f"{self.wall_ms:.3f}",
                "" if self.steps_to_stabilize is None else str(self.steps_to_stabilize),
                num(self.activity_fraction)]


@dataclass
class Trajectory:
    states: np.ndarray          # (steps + 1, nx), starting at x0
    controls: np.ndarray        # (steps, nu), applied (saturated)
    commanded: np.ndarray       # (steps, nu), solver output before saturation
    active: np.ndarray          # (steps,) any control limit active
    stabilized_at: int | None
    diverged: bool


@dataclass
class MpcController:
    """Offline artefacts for one MPC problem: condensed template and layers."""

    template: CondensedTemplate
    cache: object
    limits: BoxLimits

    @classmethod
    def build(cls, sys: LinearSystem, weights: MpcWeights, limits: BoxLimits,
              sigma: float = DEFAULT_SIGMA, grid_points: int = 13) -> MpcController:
        template = build_condensed_mpc(sys, weights, limits)
        # equilibration and layers depend only on H_bar and G_bar, not on x0
        p0 = instantiate(template, np.zeros(sys.nx))
        cache = precompute_all(p0, build_penalty_grid(grid_points), sigma)
        return cls(template, cache, limits)


ACTIVE_RTOL = 1e-3


def _limit_active(u: np.ndarray, limits: BoxLimits, rtol: float = ACTIVE_RTOL) -> bool:
    # relative to the box width so early-terminated iterates still register
    width = limits.u_hi - limits.u_lo
    tol = rtol * np.where(np.isfinite(width), width, 1.0)
    return bool(np.any(u >= limits.u_hi - tol) or np.any(u <= limits.u_lo + tol))


def simulate_closed_loop(sys: LinearSystem, weights: MpcWeights, limits: BoxLimits, x0,
                         steps: int, iterations_per_step: int | None = 1, *,
                         settings: SolverSettings | None = None,
                         controller: MpcController | None = None,
                         activity_window: int = 50, seed: int = 0,
                         initial_solve: bool = True,
                         stop_when_stable: bool = False) -> tuple[Trajectory, RunRecord]:
    """Receding-horizon loop on the true linear dynamics.

    Each step re-instantiates the condensed QP at the current state, runs
    ``iterations_per_step`` solver iterations from the previous step's full
    iterate ``(y, z, lam)`` and penalty (or solves to tolerance when
    ``None``), and applies the first control saturated to the limits.
    With ``initial_solve`` the first step is solved to tolerance so the
    warm start carried into the loop is a genuine optimum.
    """
    settings = settings or SolverSettings()
    controller = controller or MpcController.build(sys, weights, limits)
    template, cache = controller.template, controller.cache
    x = np.asarray(x0, dtype=float).copy()
    states, applied, commanded, active = [x.copy()], [], [], []
    stabilized_at = 0 if np.abs(x).max() <= STABLE_TOL else None
    diverged = False
    prev = None
    total_iters = 0
    report = None
    t0 = time.perf_counter()
    for t in range(steps):
        p = instantiate(template, x)
        if iterations_per_step is None or (t == 0 and initial_solve):
            report = solve(p, cache, settings, warm=prev)
        else:
            report = fixed_iters(p, cache, settings, iterations_per_step, warm=prev)
        total_iters += report.iterations
        sol = report.solution
        # carry z as well: resetting it to G y every step gives the
        # one-iteration loop spurious fixed points away from the QP solution
        prev = (sol.y, sol.z, sol.lam, sol.final_index)
        _, controls = recover_trajectory(template, report.y, x)
        u_cmd = controls[0]
        u = np.clip(u_cmd, limits.u_lo, limits.u_hi)
        commanded.append(u_cmd)
        applied.append(u)
        active.append(_limit_active(u_cmd, limits))
        x = sys.step(x, u)
        states.append(x.copy())
        norm = np.abs(x).max()
        if stabilized_at is None and norm <= STABLE_TOL:
            stabilized_at = t + 1
            if stop_when_stable:
                break
        if not np.isfinite(norm) or norm > DIVERGED:
            diverged = True
            break
    wall = time.perf_counter() - t0

    active_arr = np.array(active, dtype=bool)
    # stopping early counts the remaining window steps as inactive
    denom = min(activity_window, steps)
    traj = Trajectory(np.array(states), np.array(applied).reshape(-1, sys.nu),
                      np.array(commanded).reshape(-1, sys.nu), active_arr, stabilized_at, diverged)
    record = RunRecord(
        suite="random-mpc", size=sys.nu, seed=seed, iterations=total_iters,
        r_prim=report.r_prim if report else 0.0, r_dual=report.r_dual if report else 0.0,
        converged=stabilized_at is not None and not diverged,
        wall_ms=1e3 * wall, steps_to_stabilize=stabilized_at,
        activity_fraction=float(active_arr[:denom].sum()) / denom if denom else 0.0,
    )
    return traj, record


def default_mpc_problem(nu: int, seed: int, horizon: int = 40, *, unstable: bool = False,
                        u_max: float = 1.0):
    """System, weights and limits used by the random-MPC suite (``Q = I``, ``R = I``)."""
    sys = gen_random_linear_system(nu, seed, unstable=unstable)
    weights = MpcWeights(np.eye(sys.nx), np.eye(nu), horizon)
    return sys, weights, BoxLimits.symmetric(nu, u_max)


def _saturated_lqr_activity(sys: LinearSystem, K: np.ndarray, limits: BoxLimits, x0, window: int) -> float:
    x, hits = x0, 0
    for _ in range(window):
        u_cmd = -K @ x
        hits += _limit_active(u_cmd, limits)
        x = sys.step(x, np.clip(u_cmd, limits.u_lo, limits.u_hi))
    return hits / window


def scale_initial_state(sys: LinearSystem, weights: MpcWeights, limits: BoxLimits, seed: int, *,
                        controller: MpcController | None = None, target: float = 0.2,
                        window: int = 50, growth: float = 1.25, max_rounds: int = 60,
                        settings: SolverSettings | None = None) -> np.ndarray:
    """Random-direction initial state, enlarged until a solve-to-tolerance
    MPC rollout has limits active in at least ``target`` of the first
    ``window`` steps.

    The scale first grows until saturated LQR feedback ``clip(-K x)`` meets
    the target, which costs no QP solves and usually lands within one
    growth step of the answer; the MPC rollout then confirms it.
    """
    controller = controller or MpcController.build(sys, weights, limits)
    settings = settings or SolverSettings(eps_prim=1e-4, eps_dual=1e-4)
    K = controller.template.K
    rng = np.random.default_rng([seed, 7919])
    direction = rng.standard_normal(sys.nx)
    direction /= np.abs(direction).max()
    u_max = np.minimum(np.abs(limits.u_lo), np.abs(limits.u_hi)).min()
    lqr_u = np.abs(K @ direction).max()
    scale = u_max / lqr_u if lqr_u > 0 else 1.0
    rounds = 0
    while _saturated_lqr_activity(sys, K, limits, scale * direction, window) < target:
        scale *= growth
        rounds += 1
        if rounds >= max_rounds:
            raise RuntimeError("could not reach the requested constraint activity")
    for _ in range(max_rounds - rounds):
        x0 = scale * direction
        _, rec = simulate_closed_loop(sys, weights, limits, x0, window, None,
                                      settings=settings, controller=controller)
        if rec.activity_fraction >= target:
            return x0
        scale *= growth
    raise RuntimeError("could not reach the requested constraint activity")


@dataclass
class BenchConfig:
    suite: str = "random-qp"
    sizes: tuple[int, ...] = DESK_QP_SIZES
    seeds: tuple[int, ...] = tuple(range(10))
    eps: float = 1e-6
    max_iters: int = 4000
    iterations_per_step: int = 1
    horizon: int = 40
    steps: int = 500
    unstable: bool = False
    full_scale: bool = False
    output: str | Path | None = None

    def __post_init__(self):
        if self.suite not in ("random-qp", "random-mpc"):
            raise ValueError(f"unknown suite {self.suite!r}")
        if self.full_scale:
            self.sizes = FULL_QP_SIZES if self.suite == "random-qp" else FULL_MPC_SIZES
        if any(s < 1 for s in self.sizes):
            raise ValueError("sizes must be positive")


def run_qp_cell(n: int, seed: int, settings: SolverSettings) -> RunRecord:
    p = gen_random_dense_qp(n, seed)
    cache = precompute_all(p)
    rep = solve(p, cache, settings)
    return RunRecord("random-qp", n, seed, rep.iterations, rep.r_prim, rep.r_dual,
                     rep.status is Status.SOLVED, 1e3 * rep.wall_time)


def run_mpc_cell(nu: int, seed: int, config: BenchConfig) -> RunRecord:
    sys, weights, limits = default_mpc_problem(nu, seed, config.horizon, unstable=config.unstable)
    controller = MpcController.build(sys, weights, limits)
    x0 = scale_initial_state(sys, weights, limits, seed, controller=controller)
    _, rec = simulate_closed_loop(sys, weights, limits, x0, config.steps, config.iterations_per_step,
                                  controller=controller, seed=seed, stop_when_stable=True)
    return rec


def records_to_csv(records: list[RunRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in sorted(records, key=lambda r: (r.size, r.seed)):
        writer.writerow(rec.row())
    return buf.getvalue()


def run_suite(config: BenchConfig, progress=None) -> list[RunRecord]:
    """Run every (size, seed) cell; write CSV to ``config.output`` if set."""
    if config.output is not None:
        out = Path(config.output)
        if not out.parent.exists():
            raise OSError(f"output directory {out.parent} does not exist")
    settings = SolverSettings(eps_prim=config.eps, eps_dual=config.eps, max_iters=config.max_iters)
    records = []
    for size in config.sizes:
        cell = []
        for seed in config.seeds:
            if config.suite == "random-qp":
                rec = run_qp_cell(size, seed, settings)
            else:
                rec = run_mpc_cell(size, seed, config)
            log.debug("%s size=%d seed=%d iters=%d", config.suite, size, seed, rec.iterations)
            cell.append(rec)
        records.extend(cell)
        if progress is not None:
            progress(size, cell)
    if config.output is not None:
        Path(config.output).write_text(records_to_csv(records))
    return records
