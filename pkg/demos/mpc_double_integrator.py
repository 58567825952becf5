"""
Receding-horizon control of a double integrator
===============================================

Condense the MPC problem around the LQR gain, check it against the
direct (states and controls) form, then close the loop with a few solver
iterations per step.
"""

import numpy as np

import clampqp as cq
from clampqp.bench import simulate_closed_loop

h = 0.1
plant = cq.LinearSystem(np.array([[1.0, h], [0.0, 1.0]]), np.array([[0.5 * h * h], [h]]))
weights = cq.MpcWeights(Q=np.eye(2), R=0.1 * np.eye(1), N=20)
limits = cq.BoxLimits.symmetric(nu=1, u_max=0.5)
x0 = np.array([1.0, 0.0])

P, K = cq.lqr_gain(plant, weights.Q, weights.R)
print("LQR gain K =", K.ravel())

# with u = -K x + du the dynamics disappear from the constraints
template = cq.build_condensed_mpc(plant, weights, limits)
qp = cq.instantiate(template, x0)
print(f"condensed QP: n={qp.n} m={qp.m}")

tight = cq.SolverSettings(eps_prim=1e-8, eps_dual=1e-8, max_iters=20_000)
rc = cq.solve(qp, cq.precompute_all(qp), tight)
_, u_cond = cq.recover_trajectory(template, rc.y, x0)

direct = cq.build_direct_mpc(plant, weights, limits, x0)
rd = cq.solve(direct, cq.precompute_all(direct), tight)
u_direct = rd.y.reshape(weights.N, 3)[:, 0]
print("first controls:", np.round(u_cond[:5, 0], 4))
print(f"direct vs condensed max gap: {np.abs(u_cond[:, 0] - u_direct).max():.2e}")

# closed loop: 5 warm-started iterations per step
traj, rec = simulate_closed_loop(plant, weights, limits, x0, steps=200, iterations_per_step=5)
print(f"stabilized at step {rec.steps_to_stabilize}, limits active in "
      f"{100 * rec.activity_fraction:.0f}% of the first 50 steps")

naive, lqr = cq.condition_report(cq.LinearSystem([[1.2]], [[1.0]]),
                                 cq.MpcWeights(np.eye(1), np.eye(1), 40))
print(f"unstable scalar plant, N=40: cond naive {naive:.3g}, cond with LQR {lqr:.3g}")
