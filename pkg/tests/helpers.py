import numpy as np

from clampqp.problem import validate


def random_problem(rng, n, m, *, n_eq=0, cost_scale=1.0):
    """Random strictly convex QP, feasible at a sampled point, with ``n_eq`` equality rows."""
    M = rng.standard_normal((n, n))
    H = cost_scale * (M.T @ M + 0.5 * np.eye(n))
    H = 0.5 * (H + H.T)
    g = cost_scale * rng.standard_normal(n)
    G = rng.standard_normal((m, n))
    y0 = rng.standard_normal(n)
    Gy0 = G @ y0
    lo = Gy0 - rng.uniform(0.1, 2.0, m)
    hi = Gy0 + rng.uniform(0.1, 2.0, m)
    n_eq = min(n_eq, m)
    lo[:n_eq] = hi[:n_eq] = Gy0[:n_eq]
    return validate(H, g, G, lo, hi)
