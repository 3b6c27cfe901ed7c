"""Direct minimisation of the discretised attention functional.

An oracle for :mod:`attnsteer.fonc_bvp` that shares none of its
machinery: the decision variables are the node gains only, covariances
come from forward RK4 propagation, the terminal constraint is enforced
by a quadratic penalty, and gradients are central finite differences.
"""

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.optimize

from .errors import InfeasibleWithinBudget
from .model import (GainTrajectory, TimeGrid, feasibility_path, lyapunov_rk4,
                    propagate_lyapunov, trapezoid)

log = logging.getLogger(__name__)

__all__ = ['DirectConfig', 'DirectResult', 'penalized_cost', 'gradient',
           'minimize_direct']


@dataclass(frozen=True)
class DirectConfig:
    grid_size: int = 41
    substeps: int = 1
    penalties: Sequence[float] = (1e2, 1e4, 1e6)
    max_iters: int = 5000
    grad_tol: float = 1e-8
    n_starts: int = 5
    seed: int = 0
    perturb_scale: float = 0.1

    def __post_init__(self):
        rho = np.asarray(self.penalties, dtype=float)
        if rho.size == 0 or np.any(np.diff(rho) <= 0) or rho[0] <= 0:
            raise ValueError("penalty weights must be positive and "
                             "strictly increasing")
        if self.n_starts < 1 or self.grid_size < 3:
            raise ValueError("need at least one start and three nodes")


@dataclass
class DirectResult:
    gains: GainTrajectory
    J_value: float
    J_spatial: float
    J_temporal: float
    endpoint_gap: float
    seed: int
    runs: list = field(default_factory=list)


def _cost_terms(alpha, A, sigma, h):
    """Attention value for stacked node gains ``A`` (..., N, n, n).

    ``A'`` is the forward difference on each interval, paired with the
    interval-averaged covariance, so oscillating gains are penalised.
    """
    spatial = trapezoid(np.moveaxis(np.einsum('...kij,...kij->...k', A, A),
                                    -1, 0), h)
    D = np.diff(A, axis=-3) / h
    Sm = 0.5 * (sigma[..., 1:, :, :] + sigma[..., :-1, :, :])
    temporal = h * np.einsum('...kij,...kjl,...kil->...', D, Sm, D)
    return alpha * spatial + (1 - alpha) * temporal, spatial, temporal


def _batch_value(problem, A, rho, h, substeps):
    sigma = lyapunov_rk4(problem.sigma_init, A, problem.BBt, h, substeps)
    J, _, _ = _cost_terms(problem.alpha, A, sigma, h)
    gap = np.linalg.norm(sigma[..., -1, :, :] - problem.sigma_fin,
                         axis=(-2, -1))
    return J + rho * gap ** 2, gap


def penalized_cost(problem, gains, rho, substeps=2):
    """Penalised attention value of a gain trajectory.

    Returns
    -------
    value : float
        ``J_alpha + rho * ||Sigma_T - Sigma_fin||_F^2``.
    endpoint_gap : float
        ``||Sigma_T - Sigma_fin||_F``.
    """
    path = propagate_lyapunov(problem, gains, substeps)
    J, _, _ = _cost_terms(problem.alpha, gains.A, path.sigma, gains.grid.h)
    gap = float(np.linalg.norm(path.sigma[-1] - problem.sigma_fin))
    return float(J + rho * gap ** 2), gap


def _fd_steps(x):
    return 1e-6 * (1.0 + np.abs(x))


def gradient(problem, gains, rho, substeps=2):
    """Central finite-difference gradient of :func:`penalized_cost`.

    Every entry of every node gain is perturbed by ``1e-6 (1 + |a|)``;
    all perturbed trajectories are propagated as one batch.

    Returns
    -------
    ndarray, shape (N, n, n)
    """
    A = np.asarray(gains.A, dtype=float)
    return _gradient_flat(problem, A, rho, gains.grid.h, substeps).reshape(
        A.shape)


def _gradient_flat(problem, A, rho, h, substeps):
    x = A.ravel()
    D = x.size
    steps = _fd_steps(x)
    X = np.repeat(x[None, :], 2 * D, axis=0)
    idx = np.arange(D)
    X[idx, idx] += steps
    X[D + idx, idx] -= steps
    actual = X[idx, idx] - X[D + idx, idx]
    vals, _ = _batch_value(problem, X.reshape((2 * D,) + A.shape), rho, h,
                           substeps)
    return (vals[:D] - vals[D:]) / actual


def _to_increments(A, h):
    # optimiser coordinates: first gain plus increments scaled by 1/sqrt(h),
    # which whitens the temporal term
    z = np.empty_like(A)
    z[0] = A[0]
    z[1:] = np.diff(A, axis=0) / np.sqrt(h)
    return z


def _from_increments(z, h):
    A = np.empty_like(z)
    A[0] = z[0]
    A[1:] = z[0] + np.sqrt(h) * np.cumsum(z[1:], axis=0)
    return A


def _run(problem, A0, cfg, h):
    shape = A0.shape
    reparam = problem.alpha < 1
    if reparam:
        to_A = lambda z: _from_increments(z.reshape(shape), h)
        x = _to_increments(A0, h).ravel()
    else:
        to_A = lambda z: z.reshape(shape)
        x = A0.ravel().copy()
    stages = []
    for stage, rho in enumerate(cfg.penalties):
        last = stage == len(cfg.penalties) - 1
        def f(z, rho=rho):
            v, _ = _batch_value(problem, to_A(z), rho, h, cfg.substeps)
            return float(v) if np.isfinite(v) else 1e300

        def g(z, rho=rho):
            gA = _gradient_flat(problem, to_A(z), rho, h,
                                cfg.substeps).reshape(shape)
            if not reparam:
                return gA.ravel()
            # transpose of the increment map
            gz = np.empty_like(gA)
            gz[0] = gA.sum(axis=0)
            gz[1:] = np.sqrt(h) * np.cumsum(gA[::-1], axis=0)[::-1][1:]
            return gz.ravel()

        res = scipy.optimize.minimize(
            f, x, jac=g, method='L-BFGS-B',
            options={'maxiter': cfg.max_iters, 'gtol': cfg.grad_tol,
                     'ftol': 1e-15 if last else 1e-11, 'maxcor': 30})
        x = res.x
        _, gap = _batch_value(problem, to_A(x), rho, h, cfg.substeps)
        stages.append({'rho': rho, 'value': float(res.fun),
                       'gap': float(gap), 'iters': int(res.nit)})
        log.debug("rho=%g value=%.10g gap=%.3e iters=%d", rho, res.fun, gap,
                  res.nit)
    return to_A(x), stages


def minimize_direct(problem, config=None):
    """Multi-start penalised single shooting.

    Start 0 is the straight-line feasibility gain; the others add
    seeded Gaussian perturbations to it.  Each start runs the whole
    penalty schedule.  The feasible run (``gap <= 1e-4 ||Sigma_fin||_F``)
    with the lowest attention value wins; ties go to the smaller seed.

    Raises
    ------
    InfeasibleWithinBudget
        If no run meets the endpoint tolerance.
    """
    cfg = config or DirectConfig()
    grid = TimeGrid(cfg.grid_size, problem.T)
    h = grid.h
    base, _ = feasibility_path(problem, grid)
    tol = 1e-4 * np.linalg.norm(problem.sigma_fin)
    runs = []
    for i in range(cfg.n_starts):
        seed = cfg.seed + i
        A0 = base.A.copy()
        if i > 0:
            rng = np.random.default_rng(seed)
            A0 += cfg.perturb_scale * (1 + np.abs(A0)) * rng.standard_normal(
                A0.shape)
        A, stages = _run(problem, A0, cfg, h)
        sigma = lyapunov_rk4(problem.sigma_init, A, problem.BBt, h,
                             cfg.substeps)
        J, Js, Jt = _cost_terms(problem.alpha, A, sigma, h)
        gap = float(np.linalg.norm(sigma[-1] - problem.sigma_fin))
        runs.append({'seed': seed, 'J': float(J), 'J_spatial': float(Js),
                     'J_temporal': float(Jt), 'gap': gap, 'A': A,
                     'stages': stages})
    feasible = sorted((r for r in runs if r['gap'] <= tol),
                      key=lambda r: (r['J'], r['seed']))
    summary = [{k: v for k, v in r.items() if k != 'A'} for r in runs]
    if not feasible:
        raise InfeasibleWithinBudget(
            f"no start reached endpoint gap {tol:.2e} (best "
            f"{min(r['gap'] for r in runs):.2e})", best=summary)
    best = feasible[0]
    gains = GainTrajectory(grid, best['A'],
                           np.gradient(best['A'], h, axis=0, edge_order=2))
    return DirectResult(gains, best['J'], best['J_spatial'],
                        best['J_temporal'], best['gap'], best['seed'], summary)
