"""Online stage: the clamp iteration, residual checks and penalty switching."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .layers import LayerCache, PenaltyGrid, nearest_index
from .problem import QProblem, Solution, Status

RHO_FLOOR = 1e-4


class InvalidCache(ValueError):
    """The layer cache does not match the problem being solved."""


@dataclass
class SolverSettings:
    eps_prim: float = 1e-6
    eps_dual: float = 1e-6
    check_interval: int = 25
    max_iters: int = 4000
    rho_switch_threshold: float = 5.0
    adaptive_rho: bool = True

    def __post_init__(self):
        if self.check_interval < 1:
            raise ValueError("check_interval must be >= 1")
        if self.max_iters < self.check_interval:
            raise ValueError("max_iters must be >= check_interval")
        if self.eps_prim <= 0 or self.eps_dual <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class SolveReport:
    solution: Solution
    wall_time: float = 0.0
    history: list[tuple[int, float, float]] = field(default_factory=list)
    v: np.ndarray | None = None  # final scaled iterate

    def __getattr__(self, name):
        # forward y, lam, status, ... to the solution
        if name in ("solution", "__setstate__"):
            raise AttributeError(name)
        return getattr(self.solution, name)


def iterate(v: np.ndarray, W: np.ndarray, b: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """One layer: ``clamp(W v + b, lo, hi)``."""
    return np.clip(W @ v + b, lo, hi)


def residuals(y: np.ndarray, z: np.ndarray, lam: np.ndarray, p: QProblem) -> tuple[float, float]:
    """Infinity norms of ``G y - z`` and ``H y + g + G' lam``."""
    r_prim = np.abs(p.G @ y - z).max(initial=0.0)
    r_dual = np.abs(p.H @ y + p.g + p.G.T @ lam).max(initial=0.0)
    return float(r_prim), float(r_dual)


def _inf_norm(x: np.ndarray) -> float:
    return float(np.abs(x).max(initial=0.0))


def rho_nominal(r_prim: float, r_dual: float, y, z, lam, p: QProblem, rho: float) -> float:
    """Residual-balancing penalty estimate; holds ``rho`` if either residual is zero."""
    if r_prim <= 0.0 or r_dual <= 0.0:
        return rho
    dual_scale = max(_inf_norm(p.H @ y), _inf_norm(p.G.T @ lam), _inf_norm(p.g), RHO_FLOOR)
    prim_scale = max(_inf_norm(p.G @ y), _inf_norm(z), RHO_FLOOR)
    return rho * np.sqrt((r_prim * dual_scale) / (r_dual * prim_scale))


def select_layer(rho_nom: float, grid: PenaltyGrid, current_index: int, threshold: float) -> int:
    candidate = nearest_index(grid.values, rho_nom)
    current = grid.values[current_index]
    if max(rho_nom / current, current / rho_nom) >= threshold:
        return candidate
    return current_index


def warm_start(prev: Solution, p: QProblem) -> tuple[np.ndarray, np.ndarray, np.ndarray, int | None]:
    """Unscaled warm start ``(y, G y, lam, index)`` from a previous solution."""
    y = np.asarray(prev.y, dtype=float)
    lam = np.asarray(prev.lam, dtype=float)
    if y.shape != (p.n,) or lam.shape != (p.m,):
        raise ValueError(f"warm start has shapes {y.shape}, {lam.shape}; problem is n={p.n}, m={p.m}")
    return y.copy(), p.G @ y, lam.copy(), prev.final_index


class _Run:
    """Mutable state of one solve on a fixed cache."""

    def __init__(self, p: QProblem, cache: LayerCache, settings: SolverSettings, start):
        if (p.n, p.m) != (cache.n, cache.m):
            raise InvalidCache(f"cache built for n={cache.n}, m={cache.m}; problem is n={p.n}, m={p.m}")
        self.p = p
        self.cache = cache
        self.settings = settings
        sc = cache.scaling
        self.n, self.m = p.n, p.m
        self.g_s, c_s, d_s = sc.scale_data(p.g, p.c, p.d)
        self.lo = np.concatenate([np.full(self.n, -np.inf), c_s, np.full(self.m, -np.inf)])
        self.hi = np.concatenate([np.full(self.n, np.inf), d_s, np.full(self.m, np.inf)])

        index = cache.grid.initial_index
        if start is None:
            self.v = np.zeros(self.n + 2 * self.m)
        else:
            y, z, lam, prev_index = start
            self.v = np.concatenate(sc.scale_iterate(y, z, lam))
            if prev_index is not None:
                index = prev_index
        self.index = -1
        self.trace: list[tuple[int, int]] = []
        self.history: list[tuple[int, float, float]] = []
        self._activate(index, 0)

    def _activate(self, k: int, it: int) -> None:
        if k == self.index:
            return
        self.index = k
        self.W = self.cache.W[k]
        self.b = self.cache.bias(k, self.g_s)
        self.trace.append((it, k))

    def unscaled(self):
        n, m = self.n, self.m
        v = self.v
        return self.cache.scaling.unscale_iterate(v[:n], v[n:n + m], v[n + m:])

    def step(self) -> None:
        self.v = np.clip(self.W @ self.v + self.b, self.lo, self.hi)

    def check(self, it: int) -> bool:
        """Residual check and penalty update; returns True when converged."""
        y, z, lam = self.unscaled()
        r_prim, r_dual = residuals(y, z, lam, self.p)
        self.history.append((it, r_prim, r_dual))
        s = self.settings
        if r_prim <= s.eps_prim and r_dual <= s.eps_dual:
            return True
        if s.adaptive_rho:
            grid = self.cache.grid
            rho = grid.values[self.index]
            nominal = rho_nominal(r_prim, r_dual, y, z, lam, self.p, rho)
            self._activate(select_layer(nominal, grid, self.index, s.rho_switch_threshold), it)
        return False

    def report(self, it: int, converged: bool, t0: float) -> SolveReport:
        y, z, lam = self.unscaled()
        r_prim, r_dual = residuals(y, z, lam, self.p)
        if not converged:
            converged = r_prim <= self.settings.eps_prim and r_dual <= self.settings.eps_dual
        status = Status.SOLVED if converged else Status.MAX_ITERS
        sol = Solution(y=y, z=z, lam=lam, status=status, iterations=it,
                       r_prim=r_prim, r_dual=r_dual, rho_trace=list(self.trace))
        return SolveReport(sol, time.perf_counter() - t0, self.history, self.v.copy())


def _start_from(warm, p: QProblem):
    if warm is None:
        return None
    if isinstance(warm, Solution):
        return warm_start(warm, p)
    return warm


def solve(p: QProblem, cache: LayerCache, settings: SolverSettings | None = None, warm=None) -> SolveReport:
    """Iterate until both residuals meet tolerance at a check point, or
    ``max_iters``.

    ``warm`` is either a previous :class:`Solution` or a tuple
    ``(y, z, lam, grid_index)`` in unscaled coordinates.
    """
    settings = settings or SolverSettings()
    t0 = time.perf_counter()
    run = _Run(p, cache, settings, _start_from(warm, p))
    it = 0
    converged = False
    for it in range(1, settings.max_iters + 1):
        run.step()
        if it % settings.check_interval == 0 and run.check(it):
            converged = True
            break
    return run.report(it, converged, t0)


def fixed_iters(p: QProblem, cache: LayerCache, settings: SolverSettings | None = None,
                k: int = 1, warm=None) -> SolveReport:
    """Run exactly ``k`` iterations; penalty switches still happen at check points."""
    if k < 1:
        raise ValueError("k must be >= 1")
    settings = settings or SolverSettings()
    t0 = time.perf_counter()
    run = _Run(p, cache, settings, _start_from(warm, p))
    for it in range(1, k + 1):
        run.step()
        if it % settings.check_interval == 0:
            run.check(it)
    return run.report(k, False, t0)
