"""Reference implementations used to check the fused iteration.

None of these share code with :mod:`clampqp.layers` or :mod:`clampqp.solver`:
the ADMM steps do explicit linear solves, and :func:`brute_force_kkt`
enumerates active sets.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .problem import QProblem, Solution, Status


class InfeasibleProblem(ValueError):
    pass


@dataclass
class AdmmState:
    ybar: np.ndarray
    y: np.ndarray
    z: np.ndarray
    mu: np.ndarray
    lam: np.ndarray

    @classmethod
    def zeros(cls, n: int, m: int) -> AdmmState:
        return cls(np.zeros(n), np.zeros(n), np.zeros(m), np.zeros(n), np.zeros(m))


def _kkt_solve(p: QProblem, sigma: float, rho_vec: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    K = p.H + sigma * np.eye(p.n) + p.G.T @ np.diag(rho_vec) @ p.G
    return np.linalg.solve(K, rhs)


def _exact(x: float) -> Fraction:
    return Fraction(float(x))


def admm_step_original(state: AdmmState, p: QProblem, sigma: float, rho_vec: np.ndarray) -> AdmmState:
    """One ADMM step in the textbook order (ybar, y, z, mu, lam).

    The ``y`` and ``mu`` updates are evaluated in exact rational arithmetic
    and rounded once, so ``mu`` cancels to exactly zero as the algebra says
    it should.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive for the original ADMM order")
    rho_vec = np.asarray(rho_vec, dtype=float)
    rhs = -p.g + sigma * state.y - state.mu + p.G.T @ (rho_vec * state.z - state.lam)
    ybar = _kkt_solve(p, sigma, rho_vec, rhs)

    s = _exact(sigma)
    y_exact = [_exact(yb) + _exact(mu) / s for yb, mu in zip(ybar, state.mu)]
    mu_exact = [_exact(mu) + s * (_exact(yb) - ye) for mu, yb, ye in zip(state.mu, ybar, y_exact)]
    y = np.array([float(v) for v in y_exact])
    mu = np.array([float(v) for v in mu_exact])

    z = np.clip(p.G @ ybar + state.lam / rho_vec, p.c, p.d)
    lam = state.lam + rho_vec * (p.G @ y - z)
    return AdmmState(ybar=ybar, y=y, z=z, mu=mu, lam=lam)


def admm_step_reordered(y, z, lam, p: QProblem, sigma: float, rho_vec: np.ndarray):
    """Dual update first, then the primal solve and the projection."""
    rho_vec = np.asarray(rho_vec, dtype=float)
    lam_next = lam + rho_vec * (p.G @ y - z)
    rhs = -p.g + sigma * y + p.G.T @ (rho_vec * z - lam_next)
    y_next = _kkt_solve(p, sigma, rho_vec, rhs)
    z_next = np.clip(p.G @ y_next + lam_next / rho_vec, p.c, p.d)
    return y_next, z_next, lam_next


def brute_force_kkt(p: QProblem, tol: float = 1e-9, max_rows: int = 12) -> Solution:
    """Exact solution of a tiny QP by enumerating active sets.

    Each row is inactive, at its lower bound or at its upper bound
    (equality rows are always active).  For every combination the
    equality-constrained KKT system is solved and kept if it is primal
    feasible with correctly signed multipliers.
    """
    n, m = p.n, p.m
    if m > max_rows:
        raise ValueError(f"brute force limited to {max_rows} rows, got {m}")
    options = []
    for i in range(m):
        if p.c[i] == p.d[i]:
            options.append(("eq",))
            continue
        opts = ["free"]
        if np.isfinite(p.c[i]):
            opts.append("lo")
        if np.isfinite(p.d[i]):
            opts.append("hi")
        options.append(tuple(opts))

    scale = 1.0 + max(np.abs(p.c[np.isfinite(p.c)]).max(initial=0.0),
                      np.abs(p.d[np.isfinite(p.d)]).max(initial=0.0))
    best = None
    for combo in itertools.product(*options):
        active = [i for i, o in enumerate(combo) if o != "free"]
        k = len(active)
        if k > n:
            continue
        GA = p.G[active]
        bA = np.array([p.d[i] if combo[i] == "hi" else p.c[i] for i in active])
        K = np.block([[p.H, GA.T], [GA, np.zeros((k, k))]])
        rhs = np.concatenate([-p.g, bA])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(sol)):
            continue
        y = sol[:n]
        lam = np.zeros(m)
        lam[active] = sol[n:]
        Gy = p.G @ y
        if np.any(Gy < p.c - tol * scale) or np.any(Gy > p.d + tol * scale):
            continue
        signs_ok = all(
            (combo[i] != "hi" or lam[i] >= -tol) and (combo[i] != "lo" or lam[i] <= tol)
            for i in active
        )
        if not signs_ok:
            continue
        obj = p.objective(y)
        if best is None or obj < best[0]:
            best = (obj, y, lam, Gy)

    if best is None:
        raise InfeasibleProblem("no active set yields a feasible KKT point")
    _, y, lam, Gy = best
    z = np.clip(Gy, p.c, p.d)
    r_prim = float(np.abs(Gy - z).max())
    r_dual = float(np.abs(p.H @ y + p.g + p.G.T @ lam).max())
    return Solution(y=y, z=z, lam=lam, status=Status.SOLVED, iterations=0,
                    r_prim=r_prim, r_dual=r_dual)
