"""Problem data, covariance propagation and the attention functional.

Everything here lives on a uniform :class:`TimeGrid`.  Gains are stored
node-wise and treated as piecewise linear in time; covariances follow
the differential Lyapunov equation

    Sigma' = A Sigma + Sigma A^T + B B^T.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (BoundsUnavailable, GridMismatch, IndefiniteCovariance)
from .matfun import check_spd, sym

__all__ = ['SteeringProblem', 'TimeGrid', 'GainTrajectory', 'CovariancePath',
           'SpectralBounds', 'FoncSolution', 'FoncResiduals',
           'propagate_lyapunov', 'attention_cost', 'feasibility_path',
           'spectral_bounds', 'fonc_residuals', 'trapezoid']


@dataclass(frozen=True)
class SteeringProblem:
    """Covariance steering instance.

    Parameters
    ----------
    sigma_init, sigma_fin : ndarray, shape (n, n)
        Endpoint covariances (SPD).
    B : ndarray, shape (n, m)
        Noise channel.
    T : float
        Horizon, ``T > 0``.
    alpha : float
        Weight of the spatial term, ``0 <= alpha <= 1``.
    """

    sigma_init: np.ndarray
    sigma_fin: np.ndarray
    B: np.ndarray
    T: float = 1.0
    alpha: float = 0.5

    def __post_init__(self):
        s0 = check_spd(self.sigma_init, "sigma_init")
        s1 = check_spd(self.sigma_fin, "sigma_fin")
        if s0.shape != s1.shape:
            raise ValueError("sigma_init and sigma_fin differ in shape")
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if B.shape[0] != s0.shape[0]:
            raise ValueError(f"B must have {s0.shape[0]} rows, got {B.shape}")
        if not np.all(np.isfinite(B)):
            raise ValueError("B has non-finite entries")
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        for name, val in (('sigma_init', s0), ('sigma_fin', s1), ('B', B)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, 'T', float(self.T))
        object.__setattr__(self, 'alpha', float(self.alpha))

    @property
    def n(self):
        return self.sigma_init.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def BBt(self):
        return self.B @ self.B.T

    def with_alpha(self, alpha):
        return SteeringProblem(self.sigma_init, self.sigma_fin, self.B,
                               self.T, alpha)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of ``N`` nodes on ``[0, T]``."""

    N: int
    T: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"grid needs at least 2 nodes, got {self.N}")
        if not self.T > 0:
            raise ValueError("grid horizon must be positive")
        object.__setattr__(self, 'N', int(self.N))
        object.__setattr__(self, 'T', float(self.T))

    @property
    def times(self):
        t = np.linspace(0.0, self.T, self.N)
        t[-1] = self.T
        return t

    @property
    def h(self):
        return self.T / (self.N - 1)

    def refined(self):
        """Grid with every interval halved (``2N - 1`` nodes)."""
        return TimeGrid(2 * self.N - 1, self.T)


@dataclass
class GainTrajectory:
    grid: TimeGrid
    A: np.ndarray
    A_dot: np.ndarray

    @classmethod
    def from_gains(cls, grid, A):
        """Build from node gains; ``A_dot`` by second-order differences."""
        A = np.asarray(A, dtype=float)
        return cls(grid, A, np.gradient(A, grid.h, axis=0, edge_order=2))

    @classmethod
    def constant(cls, grid, A):
        A = np.broadcast_to(np.asarray(A, dtype=float),
                            (grid.N,) + np.shape(A)).copy()
        return cls(grid, A, np.zeros_like(A))


@dataclass
class CovariancePath:
    grid: TimeGrid
    sigma: np.ndarray

    def eigenvalue_range(self):
        w = np.linalg.eigvalsh(sym(self.sigma))
        return float(w.min()), float(w.max())


@dataclass(frozen=True)
class SpectralBounds:
    c_lower: float
    C_upper: float
    attention_value_used: float

    def contains(self, path, rtol=1e-12):
        lo, hi = path.eigenvalue_range()
        return (lo >= self.c_lower * (1 - rtol)
                and hi <= self.C_upper * (1 + rtol))


@dataclass
class FoncSolution:
    """Node trajectories of a stationary point of the attention problem.

    ``lam`` holds the adjoint; ``M_0 = lam[0]`` and ``M_T = -lam[-1]``.
    """

    grid: TimeGrid
    sigma: np.ndarray
    lam: np.ndarray
    A: np.ndarray
    A_dot: np.ndarray
    alpha: float
    J_value: float = float('nan')
    J_spatial: float = float('nan')
    J_temporal: float = float('nan')
    residual_norm: float = float('nan')
    newton_iters: int = 0
    converged: bool = False
    info: dict = field(default_factory=dict)

    @property
    def M_0(self):
        return self.lam[0].copy()

    @property
    def M_T(self):
        return -self.lam[-1].copy()

    @property
    def gains(self):
        return GainTrajectory(self.grid, self.A, self.A_dot)

    @property
    def path(self):
        return CovariancePath(self.grid, self.sigma)


def trapezoid(values, h):
    """Composite trapezoid rule on a uniform grid along axis 0."""
    values = np.asarray(values)
    return h * (values.sum(axis=0) - 0.5 * (values[0] + values[-1]))


def _lyap_rhs(A, S, Q):
    AS = A @ S
    return AS + np.swapaxes(AS, -1, -2) + Q


def lyapunov_rk4(sigma0, A, Q, h, substeps=1):
    """RK4 for the Lyapunov flow with piecewise-linear gains.

    Parameters
    ----------
    sigma0 : ndarray, shape (..., n, n)
    A : ndarray, shape (..., N, n, n)
        Node gains; leading axes are batch axes.
    Q : ndarray, shape (n, n)
        ``B B^T``.

    Returns
    -------
    ndarray, shape (..., N, n, n)
    """
    A = np.asarray(A, dtype=float)
    N = A.shape[-3]
    out = np.empty(A.shape[:-3] + (N,) + A.shape[-2:])
    S = np.broadcast_to(sigma0, A.shape[:-3] + A.shape[-2:]).copy()
    out[..., 0, :, :] = S
    dt = h / substeps
    for k in range(N - 1):
        A0 = A[..., k, :, :]
        dA = A[..., k + 1, :, :] - A0
        for j in range(substeps):
            Ab = A0 + dA * (j / substeps)
            Am = A0 + dA * ((j + 0.5) / substeps)
            Ae = A0 + dA * ((j + 1) / substeps)
            k1 = _lyap_rhs(Ab, S, Q)
            k2 = _lyap_rhs(Am, S + 0.5 * dt * k1, Q)
            k3 = _lyap_rhs(Am, S + 0.5 * dt * k2, Q)
            k4 = _lyap_rhs(Ae, S + dt * k3, Q)
            S = S + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            S = sym(S)
        out[..., k + 1, :, :] = S
    return out


def _check_grid(problem, grid):
    if abs(grid.T - problem.T) > 1e-12 * problem.T:
        raise GridMismatch(f"grid horizon {grid.T} != problem horizon "
                           f"{problem.T}")


def propagate_lyapunov(problem, gains, substeps=2):
    """Integrate the covariance from ``sigma_init`` under ``gains``.

    Raises
    ------
    IndefiniteCovariance
        If some node is not positive definite (``node`` attribute).
    """
    _check_grid(problem, gains.grid)
    sigma = lyapunov_rk4(problem.sigma_init, gains.A, problem.BBt,
                         gains.grid.h, substeps)
    sigma[0] = problem.sigma_init
    wmin = np.linalg.eigvalsh(sigma)[:, 0]
    bad = np.flatnonzero(~(wmin > 0))
    if bad.size:
        raise IndefiniteCovariance(
            f"covariance indefinite at node {bad[0]}", node=int(bad[0]))
    return CovariancePath(gains.grid, sigma)


def _same_grid(g1, g2):
    return g1.N == g2.N and abs(g1.T - g2.T) <= 1e-12 * g1.T


def attention_cost(problem, gains, path):
    """Attention functional and its two parts.

    Returns
    -------
    J_total, J_spatial, J_temporal : float
        ``J_spatial = int tr(A A^T)``, ``J_temporal = int tr(A' S A'^T)``
        (trapezoid rule), ``J_total = alpha J_spatial + (1-alpha)
        J_temporal``.
    """
    if not _same_grid(gains.grid, path.grid):
        raise GridMismatch("gains and covariance path use different grids")
    h = gains.grid.h
    spatial = trapezoid(np.einsum('kij,kij->k', gains.A, gains.A), h)
    Ad = gains.A_dot
    temporal = trapezoid(np.einsum('kij,kjl,kil->k', Ad, path.sigma, Ad), h)
    a = problem.alpha
    return a * spatial + (1 - a) * temporal, float(spatial), float(temporal)


def feasibility_path(problem, grid):
    """Straight-line covariance path and the gain that induces it.

    ``Sigma_t = (1 - t/T) Sigma_init + (t/T) Sigma_fin`` and
    ``A_t = (Sigma' - B B^T) Sigma_t^{-1} / 2``; the derivative of ``A``
    is filled in closed form.
    """
    _check_grid(problem, grid)
    s = (grid.times / problem.T)[:, None, None]
    sigma = (1 - s) * problem.sigma_init + s * problem.sigma_fin
    sigma[-1] = problem.sigma_fin
    D = (problem.sigma_fin - problem.sigma_init) / problem.T
    Sinv = np.linalg.inv(sigma)
    G = 0.5 * (D - problem.BBt)
    A = G @ Sinv
    A_dot = -A @ D @ Sinv
    return GainTrajectory(grid, A, A_dot), CovariancePath(grid, sym(sigma))


def spectral_bounds(problem, admissible_J=None, grid=None):
    """Computable spectral enclosure ``c I <= Sigma_t <= C I`` of optimal paths.

    Any attention value attained by a feasible pair may be plugged in;
    by default the straight-line path's cost is used.
    """
    if problem.alpha == 0:
        raise BoundsUnavailable("bounds need alpha > 0")
    if admissible_J is None:
        grid = grid or TimeGrid(201, problem.T)
        gains, path = feasibility_path(problem, grid)
        admissible_J = attention_cost(problem, gains, path)[0]
    if admissible_J < 0:
        raise ValueError("attention value must be nonnegative")
    r = 2.0 * np.sqrt(problem.T * admissible_J / problem.alpha)
    w = np.linalg.eigvalsh(problem.sigma_init)
    q = np.linalg.eigvalsh(problem.BBt)[-1]
    return SpectralBounds(float(np.exp(-r) * w[0]),
                          float(np.exp(r) * (w[-1] + problem.T * q)),
                          float(admissible_J))


@dataclass
class FoncResiduals:
    """Max-norm residuals of the optimality system.

    Node-centred residuals (``primal`` ...) carry O(h^2) truncation
    error; the ``*_mid`` variants use the staggered interval stencil
    and vanish to solver tolerance on collocation solutions.
    """

    primal: float
    adjoint: float
    stationarity: float
    derivative: float
    primal_mid: float
    adjoint_mid: float
    stationarity_mid: float
    derivative_mid: float
    A_dot_start: float
    A_dot_end: float
    sigma_init_gap: float
    sigma_fin_gap: float

    def max_node(self):
        return max(self.primal, self.adjoint, self.stationarity,
                   self.derivative, self.boundary())

    def max_mid(self):
        return max(self.primal_mid, self.adjoint_mid, self.stationarity_mid,
                   self.derivative_mid, self.boundary())

    def boundary(self):
        return max(self.A_dot_start, self.A_dot_end, self.sigma_init_gap,
                   self.sigma_fin_gap)


def _fonc_terms(problem, S, L, A, Ad):
    a = problem.alpha
    AS = A @ S
    sig_rhs = AS + np.swapaxes(AS, -1, -2) + problem.BBt
    LA = L @ A
    lam_rhs = -(LA + np.swapaxes(LA, -1, -2))
    if a < 1:
        lam_rhs = lam_rhs + (1 - a) * np.swapaxes(Ad, -1, -2) @ Ad
    return sig_rhs, lam_rhs


def fonc_residuals(problem, sol):
    """Finite-difference residuals of the optimality system on ``sol``.

    Checks the Lyapunov equation, the adjoint equation
    ``-L' = L A + A^T L - (1-alpha) A'^T A'`` and stationarity
    ``L S = alpha A - (1-alpha) d/dt(A' S)`` independently of how the
    solution was produced, plus the boundary conditions.
    """
    h = sol.grid.h
    a = problem.alpha
    S, L, A, Ad = sol.sigma, sol.lam, sol.A, sol.A_dot
    mx = lambda X: float(np.max(np.abs(X), initial=0.0))

    # node-centred
    sig_rhs, lam_rhs = _fonc_terms(problem, S[1:-1], L[1:-1], A[1:-1],
                                   Ad[1:-1])
    dS = (S[2:] - S[:-2]) / (2 * h)
    dL = (L[2:] - L[:-2]) / (2 * h)
    F = Ad @ S
    dF = (F[2:] - F[:-2]) / (2 * h)
    stat = L[1:-1] @ S[1:-1] - a * A[1:-1]
    if a < 1:
        stat = stat + (1 - a) * dF
    primal, adjoint, stationarity = mx(dS - sig_rhs), mx(dL - lam_rhs), mx(stat)
    deriv = mx((A[2:] - A[:-2]) / (2 * h) - Ad[1:-1]) if a < 1 else 0.0

    # staggered: interval averages and forward differences
    av = lambda X: 0.5 * (X[1:] + X[:-1])
    sig_rhs_m, lam_rhs_m = _fonc_terms(problem, av(S), av(L), av(A), av(Ad))
    stat_m = av(L) @ av(S) - a * av(A)
    if a < 1:
        stat_m = stat_m + (1 - a) * np.diff(F, axis=0) / h
    return FoncResiduals(
        primal=primal, adjoint=adjoint, stationarity=stationarity,
        derivative=deriv,
        derivative_mid=(mx(np.diff(A, axis=0) / h - av(Ad)) if a < 1
                        else 0.0),
        primal_mid=mx(np.diff(S, axis=0) / h - sig_rhs_m),
        adjoint_mid=mx(np.diff(L, axis=0) / h - lam_rhs_m),
        stationarity_mid=mx(stat_m),
        A_dot_start=mx(Ad[0]) if a < 1 else 0.0,
        A_dot_end=mx(Ad[-1]) if a < 1 else 0.0,
        sigma_init_gap=mx(S[0] - problem.sigma_init),
        sigma_fin_gap=mx(S[-1] - problem.sigma_fin))
