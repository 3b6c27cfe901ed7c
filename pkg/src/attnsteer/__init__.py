"""Covariance steering with an attention-weighted control cost.

The gain ``A_t`` of ``dX = A_t X dt + B dW`` is chosen to move the
state covariance from ``sigma_init`` to ``sigma_fin`` while minimising
``alpha int tr(A A^T) + (1 - alpha) int tr(A' Sigma A'^T)``.
"""

from .errors import *  # noqa: F401,F403
from .fisher import (FisherPair, fisher_bound_check, fisher_cost,
                     fisher_geodesic, verify_geodesic_generator)
from .fonc_bvp import SolverConfig, continuation_sweep, solve_fonc
from .direct_opt import DirectConfig, minimize_direct
from .limits import (solve_procrustes_zero_noise, solve_spatial,
                     solve_temporal_constant, spatial_invariants_check,
                     zero_noise_closed_form)
from .mc_sim import SimConfig, simulate_paths
from .model import (CovariancePath, FoncSolution, GainTrajectory,
                    SteeringProblem, TimeGrid, attention_cost,
                    feasibility_path, fonc_residuals, propagate_lyapunov,
                    spectral_bounds)

__version__ = '0.1.0'
