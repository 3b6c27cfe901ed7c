"""Boundary-value solver for the optimality system with ``0 < alpha < 1``.

The unknowns at each node are ``(Sigma, Lambda, A, A')`` with the two
symmetric blocks stored by their upper triangles.  The second-order
stationarity condition is written as a first-order system

    Sigma'  = A Sigma + Sigma A^T + B B^T
    Lambda' = -(Lambda A + A^T Lambda) + (1 - alpha) A'^T A'
    A''     = [(alpha A - Lambda Sigma) / (1 - alpha) - A' Sigma'] Sigma^{-1}

and discretised with the implicit midpoint rule.  Boundary conditions
fix both covariance endpoints and ``A' = 0`` at ``t = 0`` and ``t = T``;
the adjoint is left free at both ends.  The resulting square nonlinear
system is solved by damped Newton with a finite-difference Jacobian.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .errors import (IllConditionedState, IndefiniteCovariance,
                     NoConvergence, SweepAborted)
from .matfun import sym, unvech, vech
from .model import (FoncSolution, SteeringProblem, TimeGrid, attention_cost,
                    feasibility_path)

log = logging.getLogger(__name__)

__all__ = ['SolverConfig', 'FoncSolution', 'assemble_first_order_system',
           'collocation_residual', 'solve_fonc', 'continuation_sweep',
           'pack_states', 'unpack_states']


@dataclass(frozen=True)
class SolverConfig:
    """Settings for :func:`solve_fonc` and :func:`continuation_sweep`."""

    grid_size: int = 201
    newton_tol: float = 1e-9
    max_newton_iters: int = 50
    backtrack: float = 0.5
    min_step: float = 1e-4
    continuation_schedule: Sequence[float] = (0.5,)
    alpha_clamp: float = 1e-2
    max_bisections: int = 6
    fd_rel_step: float = 1e-7

    def __post_init__(self):
        if self.grid_size < 21:
            raise ValueError("grid_size must be at least 21")
        if not (self.newton_tol > 0 and 0 < self.backtrack < 1
                and 0 < self.min_step < 1):
            raise ValueError("tolerances must be positive")

    def grid(self, T):
        return TimeGrid(self.grid_size, T)


def _sizes(n):
    p = n * (n + 1) // 2
    return p, n * n, 2 * p + 2 * n * n


def pack_states(sigma, lam, A, A_dot):
    """Stack node matrices into the solver's ``(N, d)`` state array."""
    N, n = A.shape[0], A.shape[-1]
    return np.concatenate([vech(sigma), vech(lam), A.reshape(N, n * n),
                           A_dot.reshape(N, n * n)], axis=1)


def unpack_states(Y, n):
    p, q, _ = _sizes(n)
    lead = Y.shape[:-1]
    S = unvech(Y[..., :p], n)
    L = unvech(Y[..., p:2 * p], n)
    A = Y[..., 2 * p:2 * p + q].reshape(lead + (n, n))
    Ad = Y[..., 2 * p + q:].reshape(lead + (n, n))
    return S, L, A, Ad


def _rhs(alpha, Q, S, L, A, Ad):
    AS = A @ S
    dS = AS + np.swapaxes(AS, -1, -2) + Q
    LA = L @ A
    dL = -(LA + np.swapaxes(LA, -1, -2)) + (1 - alpha) * (
        np.swapaxes(Ad, -1, -2) @ Ad)
    G = (alpha * A - L @ S) / (1 - alpha) - Ad @ dS
    # G S^{-1} with S symmetric
    dAd = np.swapaxes(np.linalg.solve(S, np.swapaxes(G, -1, -2)), -1, -2)
    return dS, dL, Ad, dAd


def assemble_first_order_system(problem, sigma, lam, A, A_dot):
    """Time derivatives ``(Sigma', Lambda', A', A'')`` at one state.

    Accepts single matrices or stacks along a leading axis.

    Raises
    ------
    IllConditionedState
        If ``sigma`` has condition number above ``1e12``.
    """
    a = problem.alpha
    if not 0 < a < 1:
        raise ValueError("first-order system is defined for 0 < alpha < 1")
    sigma = np.asarray(sigma, dtype=float)
    if np.any(np.linalg.cond(sigma) > 1e12):
        raise IllConditionedState("covariance is numerically singular")
    return _rhs(a, problem.BBt, sym(sigma), sym(np.asarray(lam, float)),
                np.asarray(A, float), np.asarray(A_dot, float))


def _residual(Y, alpha, Q, s0, s1, h, n):
    p, q, d = _sizes(n)
    Ym = 0.5 * (Y[1:] + Y[:-1])
    S, L, A, Ad = unpack_states(Ym, n)
    dS, dL, dA, dAd = _rhs(alpha, Q, S, L, A, Ad)
    K = Ym.shape[0]
    f = np.concatenate([vech(dS), vech(dL), dA.reshape(K, q),
                        dAd.reshape(K, q)], axis=1)
    defect = (Y[1:] - Y[:-1]) / h - f
    left = np.concatenate([Y[0, :p] - s0, Y[0, 2 * p + q:]])
    right = np.concatenate([Y[-1, :p] - s1, Y[-1, 2 * p + q:]])
    return np.concatenate([left, defect.ravel(), right])


def collocation_residual(problem, candidate, grid):
    """Implicit-midpoint residual of the discretised optimality system.

    Parameters
    ----------
    candidate : FoncSolution or ndarray, shape (N, d)
        Node states; arrays use the layout of :func:`pack_states`.

    Returns
    -------
    ndarray, shape (N * d,)
        Boundary blocks at ``t = 0``, one defect block per interval
        (scaled by ``1/h``), then boundary blocks at ``t = T``.
    """
    if isinstance(candidate, FoncSolution):
        Y = pack_states(candidate.sigma, candidate.lam, candidate.A,
                        candidate.A_dot)
    else:
        Y = np.asarray(candidate, dtype=float)
    if Y.shape[0] != grid.N:
        raise ValueError("candidate does not match grid")
    return _residual(Y, problem.alpha, problem.BBt,
                     vech(problem.sigma_init), vech(problem.sigma_fin),
                     grid.h, problem.n)


def _jacobian(fun, Y, F0, rel_step):
    """Sparse forward-difference Jacobian exploiting node adjacency.

    Residual rows of interval ``k`` involve only nodes ``k`` and ``k+1``,
    so all nodes of equal parity can be perturbed at once.
    """
    N, d = Y.shape
    b = (F0.size - (N - 1) * d) // 2
    rows, cols, vals = [], [], []
    nodes_all = np.arange(N)
    for parity in (0, 1):
        nodes = nodes_all[parity::2]
        for j in range(d):
            step = rel_step * (1.0 + np.abs(Y[nodes, j]))
            Yp = Y.copy()
            Yp[nodes, j] += step
            # exact representable step
            step = Yp[nodes, j] - Y[nodes, j]
            dF = fun(Yp) - F0
            col = nodes * d + j
            for k, c, hk in zip(nodes, col, step):
                r = []
                if k == 0:
                    r.append(np.arange(b))
                if k == N - 1:
                    r.append(b + (N - 1) * d + np.arange(b))
                if k >= 1:
                    r.append(b + (k - 1) * d + np.arange(d))
                if k <= N - 2:
                    r.append(b + k * d + np.arange(d))
                r = np.concatenate(r)
                v = dF[r] / hk
                keep = v != 0.0
                rows.append(r[keep])
                cols.append(np.full(keep.sum(), c))
                vals.append(v[keep])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return scipy.sparse.csc_matrix((vals, (rows, cols)), shape=(F0.size, Y.size))


def _min_eig(Y, n):
    p = n * (n + 1) // 2
    return np.linalg.eigvalsh(unvech(Y[:, :p], n))[:, 0].min()


def _warm_start(problem, grid, warm):
    n = problem.n
    a = problem.alpha
    if warm is None:
        gains, path = feasibility_path(problem, grid)
        A = gains.A
        S = path.sigma
        Ad = np.gradient(A, grid.h, axis=0, edge_order=2)
        L = sym(a * A @ np.linalg.inv(S))
        return pack_states(S, L, A, Ad)
    if isinstance(warm, FoncSolution):
        Y = pack_states(warm.sigma, warm.lam, warm.A, warm.A_dot)
        src = warm.grid.times
    else:
        Y = np.asarray(warm, dtype=float)
        src = np.linspace(0, problem.T, Y.shape[0])
    if Y.shape[0] == grid.N:
        return Y.copy()
    t = grid.times
    return np.stack([np.interp(t, src, Y[:, j]) for j in range(Y.shape[1])],
                    axis=1)


def _newton(fun, Y, n, cfg):
    F = fun(Y)
    norm = np.max(np.abs(F))
    merit = np.linalg.norm(F)
    it = 0
    while norm > cfg.newton_tol:
        if it >= cfg.max_newton_iters:
            raise NoConvergence(
                f"no convergence in {it} Newton iterations "
                f"(residual {norm:.3e})", best=(Y, norm, it))
        J = _jacobian(fun, Y, F, cfg.fd_rel_step)
        try:
            dY = -scipy.sparse.linalg.spsolve(J, F).reshape(Y.shape)
        except RuntimeError as exc:
            raise NoConvergence(f"singular Newton system: {exc}",
                                best=(Y, norm, it)) from None
        if not np.all(np.isfinite(dY)):
            raise NoConvergence("singular Newton system",
                                best=(Y, norm, it))
        t = 1.0
        while True:
            Yt = Y + t * dY
            if _min_eig(Yt, n) > 0:
                Ft = fun(Yt)
                mt = np.linalg.norm(Ft)
                if np.isfinite(mt) and mt < (1 - 1e-4 * t) * merit:
                    break
            t *= cfg.backtrack
            if t < cfg.min_step:
                raise NoConvergence(
                    f"line search stalled at residual {norm:.3e}",
                    best=(Y, norm, it))
        Y, F, merit = Yt, Ft, mt
        norm = np.max(np.abs(F))
        it += 1
        log.debug("newton %d: step %.3g residual %.3e", it, t, norm)
    return Y, norm, it


def _to_solution(problem, grid, Y, norm, iters, converged):
    S, L, A, Ad = unpack_states(Y, problem.n)
    sol = FoncSolution(grid, S, L, A, Ad, problem.alpha,
                       residual_norm=float(norm), newton_iters=int(iters),
                       converged=converged)
    sol.J_value, sol.J_spatial, sol.J_temporal = attention_cost(
        problem, sol.gains, sol.path)
    sol.J_value = float(sol.J_value)
    return sol


def solve_fonc(problem, config=None, warm_start=None):
    """Solve the optimality boundary-value problem for ``0 < alpha < 1``.

    Parameters
    ----------
    problem : SteeringProblem
    config : SolverConfig, optional
    warm_start : FoncSolution or ndarray, optional
        Initial iterate; interpolated if it lives on another grid.  By
        default the straight-line covariance path is used with
        ``Lambda = sym(alpha A Sigma^{-1})``.

    Returns
    -------
    FoncSolution
        Local solution reached from the warm start.

    Raises
    ------
    NoConvergence
        ``best`` holds the best iterate as a (non-converged)
        :class:`FoncSolution`.
    """
    cfg = config or SolverConfig()
    a = problem.alpha
    if not 0 < a < 1:
        raise ValueError("solve_fonc needs 0 < alpha < 1; use the limits "
                         "module for alpha in {0, 1}")
    grid = cfg.grid(problem.T)
    n = problem.n
    Y0 = _warm_start(problem, grid, warm_start)
    if _min_eig(Y0, n) <= 0:
        raise IndefiniteCovariance("warm start covariance is not SPD")
    fun = lambda Y: _residual(Y, a, problem.BBt, vech(problem.sigma_init),
                              vech(problem.sigma_fin), grid.h, n)
    try:
        Y, norm, it = _newton(fun, Y0, n, cfg)
    except NoConvergence as exc:
        Yb, nb, ib = exc.best
        exc.best = _to_solution(problem, grid, Yb, nb, ib, False)
        raise
    return _to_solution(problem, grid, Y, norm, it, True)


def _continue(problem, cfg, start, alpha):
    """Walk from ``start`` to ``alpha``, bisecting the step on failure."""
    path = [alpha]
    current = start
    depth = 0
    while path:
        target = path[-1]
        try:
            current = solve_fonc(problem.with_alpha(target), cfg, current)
            path.pop()
        except (NoConvergence, IndefiniteCovariance):
            depth += 1
            if depth > cfg.max_bisections:
                raise
            path.append(0.5 * (current.alpha + target))
    return current


def continuation_sweep(problem, config=None, alphas=(0.5,)):
    """Solve along a list of weights by continuation from ``alpha = 0.5``.

    Values are clamped to ``[eps, 1 - eps]`` with ``eps =
    config.alpha_clamp``.  The anchor at 0.5 is solved first; the
    weights above and below it are then visited outward, each warm
    started from its neighbour.  A failed weight yields a
    ``FoncSolution`` with ``converged=False`` and ``info['error']``;
    later weights on that branch restart from the last success.

    Returns
    -------
    list of FoncSolution
        In the order of ``alphas``.

    Raises
    ------
    SweepAborted
        If the anchor solve fails.
    """
    cfg = config or SolverConfig()
    eps = cfg.alpha_clamp
    clamped = [float(np.clip(a, eps, 1 - eps)) for a in alphas]
    try:
        anchor = solve_fonc(problem.with_alpha(0.5), cfg)
    except (NoConvergence, IndefiniteCovariance) as exc:
        raise SweepAborted(f"anchor solve at alpha=0.5 failed: {exc}") from exc
    results = {0.5: anchor}
    up = sorted({a for a in clamped if a > 0.5})
    down = sorted({a for a in clamped if a < 0.5}, reverse=True)
    for branch in (up, down):
        last = anchor
        for a in branch:
            try:
                last = _continue(problem, cfg, last, a)
                results[a] = last
            except (NoConvergence, IndefiniteCovariance) as exc:
                best = getattr(exc, 'best', None)
                if not isinstance(best, FoncSolution):
                    best = replace(last, converged=False, info={})
                best.info['error'] = str(exc)
                results[a] = best
    return [results[a] for a in clamped]
