"""
Noise-free limits
=================

Without noise both extreme weights have structure that can be checked
directly.  All spatial weight gives a flow with closed form; all
temporal weight reduces to an orthogonal Procrustes search.
"""

import numpy as np

from attnsteer import (SteeringProblem, solve_procrustes_zero_noise,
                       solve_spatial, solve_temporal_constant,
                       spatial_invariants_check, zero_noise_closed_form)

S0 = np.array([[4.0, np.sqrt(11.0)], [np.sqrt(11.0), 3.0]])
S1 = np.array([[2.0, -1.0], [-1.0, 1.0]])
quiet = SteeringProblem(S0, S1, np.zeros((2, 2)), T=1.0, alpha=1.0)

####################################################################
# The skew part of the gain and its trace stay fixed along the spatial
# optimum, and the whole trajectory follows from ``A_0``.

sol = solve_spatial(quiet)
print(spatial_invariants_check(sol.A))
A_T, S_T = zero_noise_closed_form(sol.A[0], S0, 1.0)
print("closed-form A_T error:", np.abs(A_T - sol.A[-1]).max())
print("closed-form Sigma_T error:", np.abs(S_T - S1).max())

####################################################################
# For the constant-gain problem, scanning the rotation angle and
# refining finds the same optimum as Riemannian descent.  Reflections
# are skipped because their determinant rules out a real logarithm.

grid = solve_procrustes_zero_noise(S0, S1, 1.0, method='grid')
grad = solve_procrustes_zero_noise(S0, S1, 1.0, method='gradient')
print(f"grid: {grid.objective:.12f} at theta={grid.theta_params[0]:.4f}, "
      f"skipped {grid.skipped_components}")
print(f"gradient: {grad.objective:.12f}")
ctrl, _ = solve_temporal_constant(quiet.with_alpha(0.0))
print(f"penalty solver: {ctrl.frobenius_sq:.12f}")
