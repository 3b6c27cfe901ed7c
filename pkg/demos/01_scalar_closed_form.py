"""
Scalar steering with a closed-form answer
=========================================

In one dimension without noise, steering a variance from 1 to 4 in unit
time costs exactly ``(log 2)^2`` when only the gain size is penalised.
By Cauchy-Schwarz the optimal gain is the constant ``log 2``.
"""

import numpy as np

from attnsteer import SteeringProblem, solve_fonc, solve_spatial

####################################################################
# Pure spatial attention (``alpha = 1``) is solved by shooting on the
# initial adjoint.

p = SteeringProblem([[1.0]], [[4.0]], [[0.0]], T=1.0, alpha=1.0)
sol = solve_spatial(p)
print(f"J = {sol.J_value:.10f}, (log 2)^2 = {np.log(2) ** 2:.10f}")
print(f"gain range: [{sol.A.min():.8f}, {sol.A.max():.8f}]")

####################################################################
# With some temporal weight the same constant gain remains optimal,
# since it makes the derivative penalty vanish.  The collocation solver
# recovers it up to its second-order discretisation error.

for alpha in (0.25, 0.75):
    s = solve_fonc(p.with_alpha(alpha))
    print(f"alpha={alpha}: J={s.J_value:.8f}  "
          f"alpha (log 2)^2={alpha * np.log(2) ** 2:.8f}  "
          f"max|A'|={np.abs(s.A_dot).max():.1e}")
