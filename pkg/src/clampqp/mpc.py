"""Linear MPC in direct (states and controls) and condensed form.

The condensed form substitutes ``u_k = -K x_k + du_k`` with the
infinite-horizon LQR gain ``K``, so states propagate through the
closed-loop matrix ``Abar = A - B K`` and the Hessian stays well
conditioned for open-loop unstable systems.

Decision vector layout of the direct form: ``[u_0; x_1; u_1; x_2; ...; u_{N-1}; x_N]``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .problem import QProblem, validate


class LqrError(RuntimeError):
    """Riccati iteration did not converge."""


@dataclass(frozen=True)
class LinearSystem:
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
            raise ValueError(f"inconsistent system shapes A{A.shape}, B{B.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def nx(self) -> int:
        return self.A.shape[0]

    @property
    def nu(self) -> int:
        return self.B.shape[1]

    def controllability_matrix(self) -> np.ndarray:
        blocks = [self.B]
        for _ in range(self.nx - 1):
            blocks.append(self.A @ blocks[-1])
        return np.hstack(blocks)

    def is_controllable(self) -> bool:
        C = self.controllability_matrix()
        # per-column normalization keeps high powers of A from swamping the rank test
        norms = np.linalg.norm(C, axis=0)
        norms[norms == 0] = 1.0
        return np.linalg.matrix_rank(C / norms) == self.nx

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.A @ x + self.B @ u


@dataclass(frozen=True)
class MpcWeights:
    """Stage weights ``Q``, ``R``, horizon ``N`` and terminal weight ``Q_N``.

    ``Q_N=None`` means the DARE solution for ``(Q, R)``.
    """

    Q: np.ndarray
    R: np.ndarray
    N: int
    Q_N: np.ndarray | None = None

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if self.N < 1:
            raise ValueError("horizon must be at least 1")
        if not np.allclose(Q, Q.T) or not np.allclose(R, R.T):
            raise ValueError("Q and R must be symmetric")
        if np.linalg.eigvalsh(R).min() <= 0:
            raise ValueError("R must be positive-definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        if self.Q_N is not None:
            object.__setattr__(self, "Q_N", np.atleast_2d(np.asarray(self.Q_N, dtype=float)))


@dataclass(frozen=True)
class BoxLimits:
    u_lo: np.ndarray
    u_hi: np.ndarray
    x_lo: np.ndarray | None = None
    x_hi: np.ndarray | None = None

    def __post_init__(self):
        for name in ("u_lo", "u_hi", "x_lo", "x_hi"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, np.atleast_1d(np.asarray(val, dtype=float)))
        if np.any(self.u_lo > self.u_hi):
            raise ValueError("u_lo exceeds u_hi")
        if (self.x_lo is None) != (self.x_hi is None):
            raise ValueError("state limits need both x_lo and x_hi")
        if self.x_lo is not None and np.any(self.x_lo > self.x_hi):
            raise ValueError("x_lo exceeds x_hi")

    @classmethod
    def symmetric(cls, nu: int, u_max: float) -> BoxLimits:
        return cls(-u_max * np.ones(nu), u_max * np.ones(nu))

    @property
    def has_state_limits(self) -> bool:
        return self.x_lo is not None


def riccati_map(P, A, B, Q, R):
    BtP = B.T @ P
    gain = np.linalg.solve(R + BtP @ B, BtP @ A)
    return Q + A.T @ P @ A - (A.T @ P @ B) @ gain


def lqr_gain(sys: LinearSystem, Q, R, tol: float = 1e-10, max_iters: int = 10_000):
    """Infinite-horizon discrete LQR by fixed-point Riccati iteration from ``P = Q``.

    Returns ``(P, K)`` with ``u = -K x``.
    """
    A, B = sys.A, sys.B
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P = Q.copy()
    for _ in range(max_iters):
        P_next = riccati_map(P, A, B, Q, R)
        P_next = 0.5 * (P_next + P_next.T)
        if np.abs(P_next - P).max() <= tol:
            P = P_next
            break
        P = P_next
    else:
        raise LqrError(f"Riccati iteration did not reach {tol:g} in {max_iters} iterations")
    BtP = B.T @ P
    K = np.linalg.solve(R + BtP @ B, BtP @ A)
    return P, K


def spectral_radius(A: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvals(A)).max())


def _terminal_weight(sys: LinearSystem, weights: MpcWeights) -> np.ndarray:
    if weights.Q_N is not None:
        return weights.Q_N
    P, _ = lqr_gain(sys, weights.Q, weights.R)
    return P


def _stage_sizes(sys: LinearSystem, N: int):
    nx, nu = sys.nx, sys.nu
    blk = nx + nu
    u_idx = [slice(k * blk, k * blk + nu) for k in range(N)]
    x_idx = [slice(k * blk + nu, (k + 1) * blk) for k in range(N)]  # x_{k+1}
    return N * blk, u_idx, x_idx


def direct_cost(sys: LinearSystem, weights: MpcWeights, Q_N: np.ndarray) -> np.ndarray:
    N = weights.N
    n, u_idx, x_idx = _stage_sizes(sys, N)
    H = np.zeros((n, n))
    for k in range(N):
        H[u_idx[k], u_idx[k]] = weights.R
        H[x_idx[k], x_idx[k]] = weights.Q if k < N - 1 else Q_N
    return H


def dynamics_rows(sys: LinearSystem, N: int) -> np.ndarray:
    nx = sys.nx
    n, u_idx, x_idx = _stage_sizes(sys, N)
    G = np.zeros((N * nx, n))
    for k in range(N):
        rows = slice(k * nx, (k + 1) * nx)
        if k > 0:
            G[rows, x_idx[k - 1]] = sys.A
        G[rows, u_idx[k]] = sys.B
        G[rows, x_idx[k]] = -np.eye(nx)
    return G


def limit_rows(sys: LinearSystem, N: int, limits: BoxLimits):
    """Selector rows and bounds for control (and optional state) limits."""
    nx, nu = sys.nx, sys.nu
    n, u_idx, x_idx = _stage_sizes(sys, N)
    if limits.u_lo.shape != (nu,) or limits.u_hi.shape != (nu,):
        raise ValueError(f"control limits must have length {nu}")
    rows, lo, hi = [], [], []
    for k in range(N):
        sel = np.zeros((nu, n))
        sel[:, u_idx[k]] = np.eye(nu)
        rows.append(sel)
        lo.append(limits.u_lo)
        hi.append(limits.u_hi)
    if limits.has_state_limits:
        if limits.x_lo.shape != (nx,):
            raise ValueError(f"state limits must have length {nx}")
        for k in range(N):
            sel = np.zeros((nx, n))
            sel[:, x_idx[k]] = np.eye(nx)
            rows.append(sel)
            lo.append(limits.x_lo)
            hi.append(limits.x_hi)
    return np.vstack(rows), np.concatenate(lo), np.concatenate(hi)


def build_direct_mpc(sys: LinearSystem, weights: MpcWeights, limits: BoxLimits | None, x0) -> QProblem:
    """Sparse-structured (but dense-stored) MPC QP over states and controls."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.nx,):
        raise ValueError(f"x0 must have length {sys.nx}")
    N = weights.N
    H = direct_cost(sys, weights, _terminal_weight(sys, weights))
    G_dyn = dynamics_rows(sys, N)
    b_dyn = np.zeros(N * sys.nx)
    b_dyn[:sys.nx] = -sys.A @ x0
    G, c, d = G_dyn, b_dyn, b_dyn.copy()
    if limits is not None:
        G_lim, lo, hi = limit_rows(sys, N, limits)
        G = np.vstack([G, G_lim])
        c = np.concatenate([c, lo])
        d = np.concatenate([d, hi])
    return validate(H, np.zeros(H.shape[0]), G, c, d)


@dataclass(frozen=True, eq=False)
class CondensedTemplate:
    sys: LinearSystem
    weights: MpcWeights
    K: np.ndarray
    Abar: np.ndarray
    S: np.ndarray
    M: np.ndarray
    H: np.ndarray          # direct-form Hessian
    H_bar: np.ndarray
    G_bar: np.ndarray
    offset_g: np.ndarray   # g_bar = offset_g @ x0
    offset_c: np.ndarray   # c_bar = c - offset_c @ x0
    c: np.ndarray
    d: np.ndarray

    @property
    def n(self) -> int:
        return self.H_bar.shape[0]

    @property
    def m(self) -> int:
        return self.G_bar.shape[0]


def condensing_maps(sys: LinearSystem, K: np.ndarray, N: int):
    """Return ``(S, M)`` with ``y = S du + M x0`` in the direct-form layout."""
    nx, nu = sys.nx, sys.nu
    B = sys.B
    Abar = sys.A - B @ K
    n, u_idx, x_idx = _stage_sizes(sys, N)
    powers = [np.eye(nx)]
    for _ in range(N):
        powers.append(Abar @ powers[-1])
    S = np.zeros((n, N * nu))
    M = np.zeros((n, nx))
    for k in range(N):
        for j in range(k + 1):
            cols = slice(j * nu, (j + 1) * nu)
            # x_{k+1} <- Abar^(k-j) B du_j
            S[x_idx[k], cols] = powers[k - j] @ B
            if j < k:
                # u_k = -K x_k + du_k, x_k <- Abar^(k-1-j) B du_j
                S[u_idx[k], cols] = -K @ powers[k - 1 - j] @ B
        S[u_idx[k], k * nu:(k + 1) * nu] = np.eye(nu)
        M[u_idx[k]] = -K @ powers[k]
        M[x_idx[k]] = powers[k + 1]
    return S, M


def build_condensed_mpc(sys: LinearSystem, weights: MpcWeights, limits: BoxLimits,
                        K: np.ndarray | None = None, *, allow_unstable: bool = False) -> CondensedTemplate:
    """Condense the MPC QP onto the control corrections ``du``.

    ``K=None`` computes the LQR gain from ``(Q, R)``. ``K`` must make
    ``A - B K`` Schur-stable unless ``allow_unstable`` is set (used for
    the naive ``K = 0`` comparison).
    """
    if K is None:
        _, K = lqr_gain(sys, weights.Q, weights.R)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (sys.nu, sys.nx):
        raise ValueError(f"K must be {sys.nu}x{sys.nx}")
    Abar = sys.A - sys.B @ K
    if not allow_unstable and spectral_radius(Abar) >= 1.0:
        raise ValueError("K does not stabilize the system (spectral radius of A - BK >= 1)")

    N = weights.N
    S, M = condensing_maps(sys, K, N)
    H = direct_cost(sys, weights, _terminal_weight(sys, weights))
    G_lim, c, d = limit_rows(sys, N, limits)
    HS = H @ S
    H_bar = S.T @ HS
    H_bar = 0.5 * (H_bar + H_bar.T)
    G_bar = G_lim @ S
    offset_g = HS.T @ M
    offset_c = G_lim @ M
    # one-time validation; per-step instances reuse these arrays untouched
    validate(H_bar, np.zeros(H_bar.shape[0]), G_bar, c, d)
    for a in (S, M, H, H_bar, G_bar, offset_g, offset_c, c, d):
        a.setflags(write=False)
    return CondensedTemplate(sys, weights, K, Abar, S, M, H, H_bar, G_bar, offset_g, offset_c, c, d)


def instantiate(template: CondensedTemplate, x0) -> QProblem:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (template.sys.nx,):
        raise ValueError(f"x0 must have length {template.sys.nx}")
    shift = template.offset_c @ x0
    return QProblem(H=template.H_bar, g=template.offset_g @ x0, G=template.G_bar,
                    c=template.c - shift, d=template.d - shift)


def recover_trajectory(template: CondensedTemplate, du, x0):
    """Map control corrections back to ``(states x_1..x_N, controls u_0..u_{N-1})``."""
    y = template.S @ np.asarray(du, dtype=float) + template.M @ np.asarray(x0, dtype=float)
    return unpack_direct(y, template.sys, template.weights.N)


def unpack_direct(y: np.ndarray, sys: LinearSystem, N: int):
    blocks = y.reshape(N, sys.nu + sys.nx)
    return blocks[:, sys.nu:].copy(), blocks[:, :sys.nu].copy()


def condensed_hessian(sys: LinearSystem, weights: MpcWeights, K: np.ndarray, Q_N: np.ndarray) -> np.ndarray:
    S, _ = condensing_maps(sys, K, weights.N)
    H = direct_cost(sys, weights, Q_N)
    return S.T @ H @ S


def condition_report(sys: LinearSystem, weights: MpcWeights, N: int | None = None) -> tuple[float, float]:
    """Condition numbers of the condensed Hessian without (``K = 0``) and with LQR preconditioning."""
    if N is not None and N != weights.N:
        weights = MpcWeights(weights.Q, weights.R, N, weights.Q_N)
    P, K = lqr_gain(sys, weights.Q, weights.R)
    Q_N = weights.Q_N if weights.Q_N is not None else P
    naive = condensed_hessian(sys, weights, np.zeros_like(K), Q_N)
    lqr = condensed_hessian(sys, weights, K, Q_N)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        s_naive = scipy.linalg.svdvals(naive)
        s_lqr = scipy.linalg.svdvals(lqr)
    return float(s_naive[0] / s_naive[-1]), float(s_lqr[0] / s_lqr[-1])
