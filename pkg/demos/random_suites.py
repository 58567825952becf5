"""
Random QP and closed-loop MPC suites
====================================

Desk-scale versions of the two benchmark setups. Each writes a CSV with
one row per (size, seed).
"""

import numpy as np

from clampqp.bench import BenchConfig, run_suite


def summary(size, cell):
    ok = sum(r.converged for r in cell)
    print(f"  size={size:4d}  converged {ok}/{len(cell)}  "
          f"mean iters {np.mean([r.iterations for r in cell]):7.1f}  "
          f"mean ms {np.mean([r.wall_ms for r in cell]):8.2f}")


print("random dense QPs, n/4 equality + n/4 inequality rows, tolerance 1e-6")
run_suite(BenchConfig(sizes=(10, 50, 200), seeds=tuple(range(10)), output="bench_qp.csv"),
          progress=summary)

# one iteration per step; size is the control dimension (nx = 3 nu)
print("closed-loop MPC, horizon 40, one warm-started iteration per step")
recs = run_suite(BenchConfig(suite="random-mpc", sizes=(4,), seeds=tuple(range(5)),
                             output="bench_mpc.csv"), progress=summary)
for r in recs:
    print(f"  seed {r.seed}: stabilized at {r.steps_to_stabilize}, "
          f"activity {r.activity_fraction:.2f}")
