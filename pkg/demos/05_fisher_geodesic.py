"""
The Fisher-Rao geodesic
=======================

The geodesic between two covariances is generated by a constant gain.
That gain is unique up to skew matrices that commute with
``M = Sigma0^{-1/2} SigmaT Sigma0^{-1/2}``.
"""

import numpy as np

from attnsteer import (GainTrajectory, SteeringProblem, TimeGrid, fisher_bound_check,
                       fisher_cost, fisher_geodesic, solve_fonc)
from attnsteer.matfun import spd_sqrt

S0 = np.array([[4.0, np.sqrt(11.0)], [np.sqrt(11.0), 3.0]])
S1 = np.array([[2.0, -1.0], [-1.0, 1.0]])
grid = TimeGrid(201, 1.0)

pair = fisher_geodesic(S0, S1, 1.0, grid)
gains = GainTrajectory.constant(grid, pair.A_F)
print("A_F =\n", np.round(pair.A_F, 5))
print("commutant dimension:", pair.commutant_dim)
print("Fisher cost of the pair:", fisher_cost(0.5, gains, pair.path)[0])

####################################################################
# A repeated eigenvalue of ``M`` opens a one-dimensional family of
# generators.

Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((3, 3)))
M = (Q * [0.5, 2.0, 2.0]) @ Q.T
A3 = np.eye(3) + 0.2 * np.ones((3, 3))
H3 = spd_sqrt(A3)
deg = fisher_geodesic(A3, H3 @ M @ H3, 1.0, grid)
print("degenerate commutant dimension:", deg.commutant_dim)

####################################################################
# The Fisher cost of an attention-optimal solution is bounded by a
# multiple of its attention value.

problem = SteeringProblem(S0, S1, np.eye(2) / 5, T=1.0, alpha=0.5)
sol = solve_fonc(problem)
for beta in (0.25, 0.5, 0.75):
    F, K, J, ok = fisher_bound_check(problem, sol, beta)
    print(f"beta={beta}: F={F:.3f} <= K J = {K * J:.1f}  ({ok})")
