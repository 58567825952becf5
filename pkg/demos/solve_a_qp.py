"""
Solving a small QP with the clamp iteration
===========================================

Build a two-variable problem, precompute the layers once, solve it, then
reuse the same layers for a new cost vector with a warm start.
"""

import numpy as np

import clampqp as cq

# minimize 0.5 y'Hy + g'y  subject to  y1 + y2 <= 1,  y1 - y2 == 0
H = np.array([[2.0, 0.5], [0.5, 1.0]])
g = np.array([-2.0, -2.0])
G = np.array([[1.0, 1.0], [1.0, -1.0]])
p = cq.validate(H, g, G, c=[-np.inf, 0.0], d=[1.0, 0.0])
print("constraint kinds:", [k.value for k in p.kinds])

# offline: equilibrate and build one fused layer per penalty value
cache = cq.precompute_all(p)
print("penalty grid:", np.round(cache.grid.values, 4))

# online: repeat clamp(W v + b) until the residuals are small
rep = cq.solve(p, cache, cq.SolverSettings(eps_prim=1e-9, eps_dual=1e-9))
print(f"status={rep.status.value} iterations={rep.iterations}")
print("y =", rep.y, " lambda =", rep.lam)

# W only depends on H and G, so a new g reuses the cache
q = p.replace(g=np.array([-1.0, 0.5]))
again = cq.solve(q, cache, warm=rep.solution)
print(f"new cost: y = {again.y}, iterations = {again.iterations}")

# the same problem round-trips through the JSON text format
text = cq.serialize_problem(p)
assert cq.serialize_problem(cq.parse_problem(text)) == text
print(text)
