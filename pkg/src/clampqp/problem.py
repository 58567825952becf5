"""QP data model, validation and the on-disk text format.

Problems have the form::

    minimize    0.5 * y' H y + g' y
    subject to  c <= G y <= d

Equality rows are encoded in the same box by setting ``c[i] == d[i]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np
import scipy.linalg

INF_THRESHOLD = 1e30
_KEYS = ("n", "m", "H", "g", "G", "c", "d")


class ProblemError(ValueError):
    """Base class for invalid problem data."""


class DimensionMismatch(ProblemError):
    pass


class NonSymmetricHessian(ProblemError):
    pass


class NonPositiveDefiniteHessian(ProblemError):
    pass


class InvertedBounds(ProblemError):
    pass


class MalformedDocument(ProblemError):
    pass


class MissingField(ProblemError):
    pass


class ConstraintKind(Enum):
    EQUALITY = "equality"
    INEQUALITY = "inequality"


class Status(str, Enum):
    SOLVED = "solved"
    MAX_ITERS = "max-iters"
    INVALID = "invalid"


@dataclass(frozen=True, eq=False)
class QProblem:
    """Dense convex QP. Construct through :func:`validate` unless the data
    is already known to be valid (e.g. re-instantiated MPC problems)."""

    H: np.ndarray
    g: np.ndarray
    G: np.ndarray
    c: np.ndarray
    d: np.ndarray

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def m(self) -> int:
        return self.G.shape[0]

    @property
    def kinds(self) -> list[ConstraintKind]:
        return [ConstraintKind.EQUALITY if e else ConstraintKind.INEQUALITY
                for e in self.equality_mask]

    @property
    def equality_mask(self) -> np.ndarray:
        return self.c == self.d

    def objective(self, y: np.ndarray) -> float:
        return float(0.5 * y @ self.H @ y + self.g @ y)

    def replace(self, **changes) -> QProblem:
        fields = {k: getattr(self, k) for k in ("H", "g", "G", "c", "d")}
        fields.update(changes)
        return QProblem(**fields)


@dataclass
class Solution:
    """Primal/dual iterate returned by the solver.

    ``rho_trace`` lists ``(iteration, grid_index)`` pairs, starting with the
    index active at iteration 0.
    """

    y: np.ndarray
    z: np.ndarray
    lam: np.ndarray
    status: Status
    iterations: int
    r_prim: float
    r_dual: float
    rho_trace: list[tuple[int, int]] = field(default_factory=list)

    @property
    def final_index(self) -> int | None:
        return self.rho_trace[-1][1] if self.rho_trace else None


def _as_vector(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be a vector, got shape {arr.shape}")
    return arr


def _as_matrix(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix, got shape {arr.shape}")
    return arr


def validate(H, g, G, c, d) -> QProblem:
    """Check every problem invariant and return an immutable :class:`QProblem`.

    Raises the :class:`ProblemError` subclass of the first violated
    invariant: dimensions, symmetry, positive-definiteness, then bounds.
    """
    H = _as_matrix(H, "H")
    G = _as_matrix(G, "G")
    g, c, d = _as_vector(g, "g"), _as_vector(c, "c"), _as_vector(d, "d")
    n = H.shape[0]
    m = G.shape[0]
    if H.shape != (n, n):
        raise DimensionMismatch(f"H must be square, got {H.shape}")
    if n == 0:
        raise DimensionMismatch("problem has no decision variables")
    if m == 0:
        raise DimensionMismatch("problem has no constraint rows; add a row with infinite bounds")
    if g.shape != (n,):
        raise DimensionMismatch(f"g has length {g.size}, expected {n}")
    if G.shape[1] != n:
        raise DimensionMismatch(f"G has {G.shape[1]} columns, expected {n}")
    if c.shape != (m,) or d.shape != (m,):
        raise DimensionMismatch(f"c and d must have length {m}, got {c.size} and {d.size}")
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(G)) and np.all(np.isfinite(g))):
        raise MalformedDocument("H, g and G must be finite")
    if np.any(np.isnan(c)) or np.any(np.isnan(d)):
        raise MalformedDocument("bounds must not be NaN")

    scale = max(1.0, np.abs(H).sum(axis=1).max())
    if np.abs(H - H.T).max() > 1e-12 * scale:
        raise NonSymmetricHessian("H is not symmetric")
    try:
        scipy.linalg.cholesky(H, lower=True)
    except np.linalg.LinAlgError:
        raise NonPositiveDefiniteHessian("H is not positive-definite") from None

    bad = np.flatnonzero(c > d)
    if bad.size:
        i = bad[0]
        raise InvertedBounds(f"row {i}: lower bound {c[i]} exceeds upper bound {d[i]}")

    arrays = [np.array(a, copy=True) for a in (H, g, G, c, d)]
    for a in arrays:
        a.setflags(write=False)
    return QProblem(*arrays)


def _decode_number(tok: Any, where: str) -> float:
    if isinstance(tok, bool):
        raise MalformedDocument(f"{where}: expected a number, got {tok!r}")
    if isinstance(tok, str):
        t = tok.strip().lower()
        if t in ("inf", "+inf", "infinity"):
            return np.inf
        if t in ("-inf", "-infinity"):
            return -np.inf
        raise MalformedDocument(f"{where}: unrecognised token {tok!r}")
    if isinstance(tok, (int, float)):
        x = float(tok)
        if x >= INF_THRESHOLD:
            return np.inf
        if x <= -INF_THRESHOLD:
            return -np.inf
        return x
    raise MalformedDocument(f"{where}: expected a number, got {type(tok).__name__}")


def _decode_vector(doc: dict, key: str) -> np.ndarray:
    val = doc[key]
    if not isinstance(val, list):
        raise MalformedDocument(f"{key} must be a flat array")
    return np.array([_decode_number(v, f"{key}[{i}]") for i, v in enumerate(val)], dtype=float)


def _decode_matrix(doc: dict, key: str, cols: int) -> np.ndarray:
    val = doc[key]
    if not isinstance(val, list) or not all(isinstance(r, list) for r in val):
        raise MalformedDocument(f"{key} must be a nested array of rows")
    rows = []
    for i, r in enumerate(val):
        if len(r) != cols:
            raise DimensionMismatch(f"{key} row {i} has {len(r)} entries, expected {cols}")
        rows.append([_decode_number(v, f"{key}[{i}][{j}]") for j, v in enumerate(r)])
    return np.array(rows, dtype=float).reshape(len(rows), cols)


def parse_problem(text: str | bytes) -> QProblem:
    """Parse a problem document (JSON object with keys n, m, H, g, G, c, d)."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"not a valid document: {exc}") from None
    if not isinstance(doc, dict):
        raise MalformedDocument("top level must be an object")
    for key in _KEYS:
        if key not in doc:
            raise MissingField(f"missing field {key!r}")
    n, m = doc["n"], doc["m"]
    if not (isinstance(n, int) and isinstance(m, int)) or isinstance(n, bool) or isinstance(m, bool):
        raise MalformedDocument("n and m must be integers")

    H = _decode_matrix(doc, "H", n)
    G = _decode_matrix(doc, "G", n)
    g = _decode_vector(doc, "g")
    c = _decode_vector(doc, "c")
    d = _decode_vector(doc, "d")
    if H.shape[0] != n:
        raise DimensionMismatch(f"H has {H.shape[0]} rows, expected n={n}")
    if G.shape[0] != m:
        raise DimensionMismatch(f"G has {G.shape[0]} rows, expected m={m}")
    for name, vec, size in (("g", g, n), ("c", c, m), ("d", d, m)):
        if vec.size != size:
            raise MissingField(f"{name} has {vec.size} entries, expected {size}")
    return validate(H, g, G, c, d)


def _encode_number(x: float):
    if np.isposinf(x):
        return "inf"
    if np.isneginf(x):
        return "-inf"
    return float(x)


def serialize_problem(p: QProblem) -> str:
    """Emit the canonical document. Finite floats use ``repr`` so parsing
    recovers them bit-for-bit."""
    doc = {
        "n": p.n,
        "m": p.m,
        "H": [[_encode_number(v) for v in row] for row in p.H],
        "g": [_encode_number(v) for v in p.g],
        "G": [[_encode_number(v) for v in row] for row in p.G],
        "c": [_encode_number(v) for v in p.c],
        "d": [_encode_number(v) for v in p.d],
    }
    return json.dumps(doc, indent=1) + "\n"


def load_problem(path) -> QProblem:
    with open(path, encoding="utf-8") as fh:
        return parse_problem(fh.read())


def save_problem(p: QProblem, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_problem(p))
