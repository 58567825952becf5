"""Offline stage: equilibration, penalty grid and per-penalty layer matrices.

One solver iteration is the affine map ``v -> W v + b`` on the stacked
iterate ``v = [y; z; lam]`` followed by a clamp of the ``z`` block.  For a
diagonal penalty ``rho`` and proximal weight ``sigma``::

    D = (H + sigma I + G' rho G)^-1

    W = [[ D (sigma I - G' rho G),       2 D G' rho,      -D G'             ],
         [ G D (sigma I - G' rho G) + G, 2 G D G' rho - I, -G D G' + rho^-1 ],
         [ rho G,                        -rho,              I               ]]

    b = [-D g; -G D g; 0]

Every penalty on the grid gets its own ``(W, D)`` pair so that switching
penalties online never refactorizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .problem import QProblem

DEFAULT_SIGMA = 1e-6
DEFAULT_GRID_POINTS = 13
EQUALITY_SCALE = 1e3
RHO_MIN = 1e-3
RHO_MAX = 1e3
RHO_INITIAL = 0.1


class FactorizationError(np.linalg.LinAlgError):
    """The KKT matrix could not be factorized (H not positive-definite)."""


@dataclass(frozen=True)
class PenaltyGrid:
    values: np.ndarray
    eq_scale: float = EQUALITY_SCALE
    initial_index: int = 0

    def __len__(self) -> int:
        return len(self.values)

    def rho_vec(self, k: int, equality_mask: np.ndarray) -> np.ndarray:
        """Per-row penalty for grid point ``k``; equality rows get ``eq_scale``."""
        base = self.values[k]
        return np.where(equality_mask, self.eq_scale * base, base)


def nearest_index(values: np.ndarray, target: float) -> int:
    """Index of the log-nearest value; ties go to the smaller value."""
    dist = np.abs(np.log10(values) - np.log10(target))
    # argmin returns the first minimum, and values are increasing
    return int(np.argmin(dist))


def build_penalty_grid(n_points: int = DEFAULT_GRID_POINTS) -> PenaltyGrid:
    if n_points < 2:
        raise ValueError(f"penalty grid needs at least 2 points, got {n_points}")
    exponents = np.linspace(np.log10(RHO_MIN), np.log10(RHO_MAX), n_points)
    values = 10.0 ** exponents
    # land exactly on the decades when the spacing allows it
    values[0], values[-1] = RHO_MIN, RHO_MAX
    values.setflags(write=False)
    return PenaltyGrid(values=values, initial_index=nearest_index(values, RHO_INITIAL))


@dataclass(frozen=True)
class Scaling:
    """Diagonal equilibration.

    The scaled problem is ``H_s = cost_scale * E H E``, ``g_s = cost_scale * E g``,
    ``G_s = F G E``, ``c_s = F c``, ``d_s = F d``.  Scaled iterates map back as
    ``y = E y_s``, ``z = z_s / F``, ``lam = F lam_s / cost_scale``.
    """

    E: np.ndarray
    F: np.ndarray
    cost_scale: float = 1.0

    @classmethod
    def identity(cls, n: int, m: int) -> Scaling:
        return cls(np.ones(n), np.ones(m), 1.0)

    def scale_problem(self, p: QProblem) -> QProblem:
        E, F, cs = self.E, self.F, self.cost_scale
        return QProblem(
            H=cs * (E[:, None] * p.H * E[None, :]),
            g=cs * E * p.g,
            G=F[:, None] * p.G * E[None, :],
            c=F * p.c,
            d=F * p.d,
        )

    def unscale_problem(self, p: QProblem) -> QProblem:
        E, F, cs = self.E, self.F, self.cost_scale
        return QProblem(
            H=(p.H / E[None, :]) / E[:, None] / cs,
            g=p.g / E / cs,
            G=(p.G / E[None, :]) / F[:, None],
            c=p.c / F,
            d=p.d / F,
        )

    def scale_data(self, g, c, d):
        """Scale only the data that changes between MPC steps."""
        return self.cost_scale * self.E * g, self.F * c, self.F * d

    def scale_iterate(self, y, z, lam):
        return y / self.E, self.F * z, self.cost_scale * lam / self.F

    def unscale_iterate(self, y, z, lam):
        return self.E * y, z / self.F, self.F * lam / self.cost_scale


def ruiz_equilibrate(p: QProblem, max_passes: int = 10, tol: float = 1e-3) -> tuple[QProblem, Scaling]:
    """Ruiz equilibration of the KKT matrix ``[[H, G'], [G, 0]]``.

    Each pass divides every row and column by the square root of its
    infinity norm. Afterwards ``H`` and ``g`` are divided by
    ``max(1, mean row infinity norm of the scaled H)``.
    """
    n, m = p.n, p.m
    K = np.block([[p.H, p.G.T], [p.G, np.zeros((m, m))]])
    scale = np.ones(n + m)
    for _ in range(max_passes):
        norms = np.abs(K).max(axis=1)
        delta = np.ones_like(norms)
        nz = norms > 0
        delta[nz] = 1.0 / np.sqrt(norms[nz])
        K = delta[:, None] * K * delta[None, :]
        scale *= delta
        if np.abs(1.0 - delta).max() <= tol:
            break

    E, F = scale[:n], scale[n:]
    H_s = K[:n, :n]
    cost_scale = 1.0 / max(1.0, np.abs(H_s).max(axis=1).mean())
    scaling = Scaling(E=E, F=F, cost_scale=cost_scale)
    scaled = scaling.scale_problem(p)
    # symmetrize to kill rounding drift from the elementwise products
    scaled = scaled.replace(H=0.5 * (scaled.H + scaled.H.T))
    return scaled, scaling


def build_kkt_inverse(H: np.ndarray, G: np.ndarray, sigma: float, rho_vec: np.ndarray) -> np.ndarray:
    """Return ``(H + sigma I + G' diag(rho) G)^-1`` via a Cholesky factorization."""
    n = H.shape[0]
    K = H + sigma * np.eye(n) + G.T @ (rho_vec[:, None] * G)
    try:
        factor = scipy.linalg.cho_factor(K, lower=True)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"KKT matrix is not positive-definite: {exc}") from None
    D = scipy.linalg.cho_solve(factor, np.eye(n))
    return 0.5 * (D + D.T)


class BiasBuilder:
    """Rebuilds ``b = [-D g; -G D g; 0]`` from cached ``D`` and ``G D``."""

    def __init__(self, D: np.ndarray, GD: np.ndarray):
        self.D = D
        self.GD = GD

    def __call__(self, g: np.ndarray) -> np.ndarray:
        m = self.GD.shape[0]
        return np.concatenate([-(self.D @ g), -(self.GD @ g), np.zeros(m)])


def build_layer(H, G, g, sigma, rho_vec, D) -> tuple[np.ndarray, BiasBuilder]:
    """Assemble the fused iteration matrix ``W`` and a bias builder.

    ``g`` is accepted for interface symmetry; the returned builder is what
    evaluates the bias, so callers can swap ``g`` without rebuilding ``W``.
    """
    n = H.shape[0]
    m = G.shape[0]
    GtR = G.T * rho_vec[None, :]          # G' rho
    GD = G @ D
    prox = sigma * np.eye(n) - GtR @ G    # sigma I - G' rho G
    W = np.empty((n + 2 * m, n + 2 * m))
    y, z, lam = slice(0, n), slice(n, n + m), slice(n + m, n + 2 * m)

    W[y, y] = D @ prox
    W[y, z] = 2.0 * D @ GtR
    W[y, lam] = -D @ G.T

    W[z, y] = GD @ prox + G
    W[z, z] = 2.0 * GD @ GtR - np.eye(m)
    W[z, lam] = -GD @ G.T + np.diag(1.0 / rho_vec)

    W[lam, y] = rho_vec[:, None] * G
    W[lam, z] = -np.diag(rho_vec)
    W[lam, lam] = np.eye(m)
    return W, BiasBuilder(D, GD)


@dataclass(frozen=True, eq=False)
class LayerCache:
    """Precomputed layers for every grid penalty of one (scaled) problem.

    ``problem`` is the scaled problem the layers were built from and
    ``scaling`` maps it back to the user's problem.
    """

    problem: QProblem
    scaling: Scaling
    grid: PenaltyGrid
    sigma: float
    W: list[np.ndarray]
    D: list[np.ndarray]
    GD: list[np.ndarray]
    rho_vec: list[np.ndarray]
    rho_inv_vec: list[np.ndarray]
    c_tilde: np.ndarray
    d_tilde: np.ndarray

    @property
    def n(self) -> int:
        return self.problem.n

    @property
    def m(self) -> int:
        return self.problem.m

    def bias(self, k: int, g_scaled: np.ndarray) -> np.ndarray:
        return BiasBuilder(self.D[k], self.GD[k])(g_scaled)


def clamp_bounds(c: np.ndarray, d: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    m = c.size
    lo = np.concatenate([np.full(n, -np.inf), c, np.full(m, -np.inf)])
    hi = np.concatenate([np.full(n, np.inf), d, np.full(m, np.inf)])
    return lo, hi


def precompute_all(
    p: QProblem,
    grid: PenaltyGrid | None = None,
    sigma: float = DEFAULT_SIGMA,
    *,
    scale: bool = True,
    max_passes: int = 10,
    tol: float = 1e-3,
) -> LayerCache:
    """Scale ``p`` and build ``(W, D)`` for every grid penalty."""
    if grid is None:
        grid = build_penalty_grid()
    if scale:
        scaled, scaling = ruiz_equilibrate(p, max_passes=max_passes, tol=tol)
    else:
        scaled, scaling = p, Scaling.identity(p.n, p.m)

    eq = p.equality_mask
    Ws, Ds, GDs, rhos, rho_invs = [], [], [], [], []
    for k in range(len(grid)):
        rho_vec = grid.rho_vec(k, eq)
        D = build_kkt_inverse(scaled.H, scaled.G, sigma, rho_vec)
        W, bias = build_layer(scaled.H, scaled.G, scaled.g, sigma, rho_vec, D)
        Ws.append(W)
        Ds.append(D)
        GDs.append(bias.GD)
        rhos.append(rho_vec)
        rho_invs.append(1.0 / rho_vec)
    lo, hi = clamp_bounds(scaled.c, scaled.d, scaled.n)
    return LayerCache(scaled, scaling, grid, sigma, Ws, Ds, GDs, rhos, rho_invs, lo, hi)
