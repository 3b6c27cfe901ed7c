"""
Trading spatial against temporal attention
==========================================

The 2x2 example steers ``[[4, sqrt 11], [sqrt 11, 3]]`` to
``[[2, -1], [-1, 1]]`` over unit time with noise ``B = I/5``.  Sweeping
the weight shows how the gain goes from constant (all temporal weight)
to strongly time-varying (all spatial weight).
"""

import numpy as np

from attnsteer import (SolverConfig, SteeringProblem, continuation_sweep,
                       solve_spatial, solve_temporal_constant)

S0 = np.array([[4.0, np.sqrt(11.0)], [np.sqrt(11.0), 3.0]])
S1 = np.array([[2.0, -1.0], [-1.0, 1.0]])
problem = SteeringProblem(S0, S1, np.eye(2) / 5, T=1.0, alpha=0.5)

####################################################################
# Interior weights are reached by continuation from ``alpha = 0.5``.

alphas = (0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99)
sols = continuation_sweep(problem, SolverConfig(), alphas)
print(" alpha    J_spatial   J_temporal   max|A'|")
for s in sols:
    peak = np.linalg.norm(s.A_dot, axis=(1, 2)).max()
    print(f"{s.alpha:6.2f} {s.J_spatial:11.5f} {s.J_temporal:12.5g} "
          f"{peak:9.4f}")

####################################################################
# The endpoints have their own solvers.  With no spatial weight the best
# gain is the smallest constant matrix that reaches the target.

ctrl, _ = solve_temporal_constant(problem.with_alpha(0.0))
print("alpha=0 constant gain:\n", np.round(ctrl.A, 5))
print(f"||A||^2 = {ctrl.frobenius_sq:.6f}")

spatial = solve_spatial(problem.with_alpha(1.0))
print(f"alpha=1: J = {spatial.J_value:.6f}")
