"""The two endpoint weights: purely spatial and purely temporal attention.

``alpha = 1``
    Stationarity reduces to ``A = Lambda Sigma`` and the optimality
    system becomes a polynomial ODE in ``(Sigma, Lambda)``; it is solved
    by shooting on the initial adjoint.  Without noise the flow has the
    closed form of :func:`zero_noise_closed_form`.
``alpha = 0``
    Every constant feasible gain is optimal; the smallest one in
    Frobenius norm is selected (:func:`solve_temporal_constant`).
    Without noise the feasible gains are parametrised by orthogonal
    matrices and the selection becomes a logarithmic Procrustes problem
    (:func:`solve_procrustes_zero_noise`).
"""

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.optimize

from .errors import (FlowDiverged, InfeasibleWithinBudget, NoConvergence,
                     NoRealLog, NoRealLogAnywhere, SingularMatrix)
from .fonc_bvp import SolverConfig
from .matfun import (mat_exp, real_log, skew, spd_invsqrt, spd_sqrt, sym,
                     unvech, vech)
from .model import (CovariancePath, FoncSolution, GainTrajectory, TimeGrid,
                    attention_cost, feasibility_path, propagate_lyapunov)

log = logging.getLogger(__name__)

__all__ = ['SpatialDecomposition', 'ConstantControl', 'ProcrustesResult',
           'TemporalConfig', 'ProcrustesConfig', 'spatial_fonc_flow',
           'solve_spatial', 'zero_noise_closed_form',
           'spatial_invariants_check', 'solve_temporal_constant',
           'solve_procrustes_zero_noise', 'temporal_fonc_check',
           'constant_endpoint']


@dataclass(frozen=True)
class SpatialDecomposition:
    S0: np.ndarray
    Omega: np.ndarray
    A0: np.ndarray

    @classmethod
    def of(cls, A0):
        A0 = np.asarray(A0, dtype=float)
        return cls(0.5 * (A0 + A0.T), 0.5 * (A0 - A0.T), A0)


@dataclass(frozen=True)
class ConstantControl:
    A: np.ndarray

    @property
    def frobenius_sq(self):
        return float(np.sum(self.A * self.A))


@dataclass
class ProcrustesResult:
    R: np.ndarray
    theta_params: np.ndarray
    objective: float
    component: str
    control: ConstantControl
    skipped_components: list = field(default_factory=list)


# ---------------------------------------------------------------- alpha = 1

def _spatial_rhs(S, L, Q):
    A = L @ S
    AS = A @ S
    dS = AS + AS.swapaxes(-1, -2) + Q
    LA = L @ A
    dL = -(LA + LA.swapaxes(-1, -2))
    return dS, dL


def _flow(sigma0, L0, Q, grid, substeps, blowup):
    """Batched RK4 of the spatial flow; diverged members become NaN."""
    S = np.broadcast_to(sigma0, L0.shape).astype(float)
    L = sym(np.asarray(L0, dtype=float))
    N = grid.N
    sig = np.empty((N,) + S.shape)
    lam = np.empty_like(sig)
    sig[0], lam[0] = S, L
    dt = grid.h / substeps
    dead = np.zeros(S.shape[:-2], dtype=bool)
    with np.errstate(all='ignore'):
        for k in range(1, N):
            for _ in range(substeps):
                k1 = _spatial_rhs(S, L, Q)
                k2 = _spatial_rhs(S + 0.5 * dt * k1[0],
                                  L + 0.5 * dt * k1[1], Q)
                k3 = _spatial_rhs(S + 0.5 * dt * k2[0],
                                  L + 0.5 * dt * k2[1], Q)
                k4 = _spatial_rhs(S + dt * k3[0], L + dt * k3[1], Q)
                S = sym(S + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]))
                L = sym(L + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]))
            big = ~(np.abs(S).max(axis=(-2, -1)) < blowup) \
                | ~(np.abs(L).max(axis=(-2, -1)) < blowup)
            if np.any(big):
                dead |= big
                S = np.where(big[..., None, None], np.nan, S)
                L = np.where(big[..., None, None], np.nan, L)
            sig[k], lam[k] = S, L
    return np.moveaxis(sig, 0, -3), np.moveaxis(lam, 0, -3), dead


def spatial_fonc_flow(problem, Lambda0, grid, substeps=2, blowup=1e8):
    """Integrate the ``alpha = 1`` optimality flow forward in time.

    Parameters
    ----------
    Lambda0 : ndarray, shape (n, n)
        Symmetric initial adjoint; the initial gain is
        ``Lambda0 @ sigma_init``.

    Returns
    -------
    sigma, lam, A : ndarray, shape (N, n, n)

    Raises
    ------
    FlowDiverged
        If ``||Sigma||`` or ``||Lambda||`` exceeds ``blowup``.
    """
    L0 = np.asarray(Lambda0, dtype=float)
    sig, lam, dead = _flow(problem.sigma_init, L0, problem.BBt, grid,
                           substeps, blowup)
    if dead:
        raise FlowDiverged("spatial flow blew up before the horizon")
    return sig, lam, lam @ sig


def _spatial_solution(problem, grid, sig, lam, resid, iters, converged):
    A = lam @ sig
    dS, dL = _spatial_rhs(sig, lam, problem.BBt)
    A_dot = dL @ sig + lam @ dS
    sol = FoncSolution(grid, sig, lam, A, A_dot, 1.0,
                       residual_norm=float(resid), newton_iters=iters,
                       converged=converged)
    J, Js, Jt = attention_cost(problem, sol.gains, sol.path)
    sol.J_value, sol.J_spatial, sol.J_temporal = float(J), Js, Jt
    return sol


def _shoot(problem, grid, X, n, substeps):
    # X: (..., p) stacked unknowns; returns mismatches (..., p) (NaN if dead)
    sig, lam, dead = _flow(problem.sigma_init, unvech(X, n), problem.BBt,
                           grid, substeps, 1e8)
    F = vech(sig[..., -1, :, :] - problem.sigma_fin)
    return F, sig, lam


def solve_spatial(problem, config=None, scales=(1.0, 0.5, 0.25, 0.0, -0.5),
                  substeps=2, warm_start=None):
    """Solve the ``alpha = 1`` problem by shooting on the initial adjoint.

    Damped Newton on ``vech(Lambda0)`` with a forward-difference
    Jacobian, started from scaled copies of
    ``sym(A_feas(0) sigma_init^{-1})``.  All starts advance together as
    one batch.  Among converged starts the one with the smallest
    attention value is returned.

    Parameters
    ----------
    warm_start : FoncSolution or ndarray, optional
        Extra start: a solution's initial adjoint, or ``Lambda0`` itself.

    Returns
    -------
    FoncSolution
        With ``alpha = 1``; ``A_dot`` is evaluated from the flow.

    Raises
    ------
    NoConvergence
        ``best`` is the start with the smallest endpoint mismatch.
    """
    cfg = config or SolverConfig()
    grid = cfg.grid(problem.T)
    n = problem.n
    p = n * (n + 1) // 2
    gains, _ = feasibility_path(problem, grid)
    L_feas = sym(gains.A[0] @ np.linalg.inv(problem.sigma_init))
    X = [vech(s * L_feas) for s in scales]
    labels = [f"scale={s:g}" for s in scales]
    if warm_start is not None:
        L0 = getattr(warm_start, 'lam', None)
        L0 = L0[0] if L0 is not None else np.asarray(warm_start, float)
        X.insert(0, vech(sym(L0)))
        labels.insert(0, "warm start")
    X = np.stack(X)
    F, _, _ = _shoot(problem, grid, X, n, substeps)
    K = len(X)
    active = np.all(np.isfinite(F), axis=1)
    iters = np.zeros(K, dtype=int)
    conv = np.zeros(K, dtype=bool)
    history = []
    for _ in range(cfg.max_newton_iters + 1):
        norm = np.max(np.abs(F), axis=1)
        conv |= active & (norm <= cfg.newton_tol)
        active &= ~conv
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        eps = cfg.fd_rel_step * (1 + np.abs(X[idx]))
        Xp = np.repeat(X[idx, None, :], p, axis=1)
        Xp[:, np.arange(p), np.arange(p)] += eps
        Fp, _, _ = _shoot(problem, grid, Xp, n, substeps)
        Jac = np.swapaxes((Fp - F[idx, None, :]) / eps[:, :, None], 1, 2)
        steps = np.zeros((len(idx), p))
        for j, i in enumerate(idx):
            if np.all(np.isfinite(Jac[j])):
                steps[j] = -np.linalg.lstsq(Jac[j], F[i], rcond=None)[0]
            else:
                active[i] = False
        t = np.ones(len(idx))
        pending = active[idx].copy()
        while np.any(pending):
            k = np.flatnonzero(pending)
            Ft, _, _ = _shoot(problem, grid,
                              X[idx[k]] + t[k, None] * steps[k], n, substeps)
            ok = np.all(np.isfinite(Ft), axis=1) & (
                np.linalg.norm(Ft, axis=1)
                < (1 - 1e-4 * t[k]) * np.linalg.norm(F[idx[k]], axis=1))
            for kk, good, f in zip(k, ok, Ft):
                i = idx[kk]
                if good:
                    X[i] = X[i] + t[kk] * steps[kk]
                    F[i] = f
                    iters[i] += 1
                    pending[kk] = False
                else:
                    t[kk] *= cfg.backtrack
                    if t[kk] < cfg.min_step:
                        active[i] = False
                        pending[kk] = False
        active &= iters < cfg.max_newton_iters
        # drop starts that stall: less than 10% progress over five steps
        norms = np.linalg.norm(F, axis=1)
        history.append(norms)
        if len(history) > 5:
            active &= ~(norms > 0.9 * history[-6])
    sols = []
    finite = np.all(np.isfinite(F), axis=1)
    for i in np.flatnonzero(finite):
        _, sig, lam = _shoot(problem, grid, X[i], n, substeps)
        sol = _spatial_solution(problem, grid, sig, lam,
                                np.max(np.abs(F[i])), int(iters[i]),
                                bool(conv[i]))
        log.debug("spatial start %s ok=%s J=%.10g", labels[i], conv[i],
                  sol.J_value)
        sols.append(sol)
    found = [s for s in sols if s.converged]
    if not found:
        best = min(sols, key=lambda s: s.residual_norm, default=None)
        raise NoConvergence("shooting did not converge from any start",
                            best=best)
    return min(found, key=lambda s: s.J_value)


def zero_noise_closed_form(A0, Sigma0, t):
    """Closed-form noise-free ``alpha = 1`` optimality flow.

    With ``A0 = S0 + Omega`` (symmetric plus skew part)::

        A_t     = e^{2 Omega t} S0 e^{-2 Omega t} + Omega
        Sigma_t = e^{2 Omega t} e^{A0^T t} Sigma0 e^{A0 t} e^{-2 Omega t}
    """
    d = SpatialDecomposition.of(A0)
    R = mat_exp(2 * d.Omega * t)
    Rinv = R.T  # exponential of a skew matrix is orthogonal
    A_t = R @ d.S0 @ Rinv + d.Omega
    E = mat_exp(d.A0 * t)
    Sigma_t = R @ E.T @ np.asarray(Sigma0, float) @ E @ Rinv
    return A_t, sym(Sigma_t)


def spatial_invariants_check(A):
    """Drift of the skew part and of the trace along a gain trajectory.

    Returns
    -------
    dict
        ``skew_deviation = max_t ||skew(A_t) - skew(A_0)||_F`` and
        ``trace_drift = max_t |tr A_t - tr A_0|``.
    """
    A = np.asarray(A, dtype=float)
    W = skew(A)
    tr = np.trace(A, axis1=-2, axis2=-1)
    return {'skew_deviation': float(np.max(np.linalg.norm(W - W[0],
                                                          axis=(-2, -1)))),
            'trace_drift': float(np.max(np.abs(tr - tr[0])))}


# ---------------------------------------------------------------- alpha = 0

def constant_endpoint(A, sigma0, Q, T):
    """Exact terminal covariance under a constant gain (Van Loan)."""
    n = A.shape[0]
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = A
    M[:n, n:] = Q
    M[n:, n:] = -A.T
    E = scipy.linalg.expm(M * T)
    F = E[:n, :n]
    return sym(F @ sigma0 @ F.T + E[:n, n:] @ F.T)


@dataclass(frozen=True)
class TemporalConfig:
    grid_size: int = 201
    penalties: Sequence[float] = (1e2, 1e4, 1e6)
    n_starts: int = 8
    seed: int = 0
    max_iters: int = 2000


def _orthogonal_starts(n, k, seed):
    rng = np.random.default_rng(seed)
    out = [np.eye(n)]
    if n == 2:
        for th in np.linspace(0, 2 * np.pi, k, endpoint=False)[1:]:
            c, s = np.cos(th), np.sin(th)
            out.append(np.array([[c, -s], [s, c]]))
        return out
    for _ in range(k - 1):
        Qm, Rm = np.linalg.qr(rng.standard_normal((n, n)))
        Qm = Qm * np.sign(np.diag(Rm))
        if np.linalg.det(Qm) < 0:
            Qm[:, 0] = -Qm[:, 0]
        out.append(Qm)
    return out


def _temporal_starts(problem, cfg):
    n, T = problem.n, problem.T
    P = spd_sqrt(problem.sigma_fin)
    Qi = spd_invsqrt(problem.sigma_init)
    starts = []
    for R in _orthogonal_starts(n, cfg.n_starts, cfg.seed):
        try:
            starts.append(real_log(P @ R @ Qi) / T)
        except (NoRealLog, SingularMatrix):
            pass
    gains, _ = feasibility_path(problem, TimeGrid(cfg.grid_size, T))
    starts.append(gains.A.mean(axis=0))
    return starts


def _penalty_solve(problem, A0, cfg):
    n, T, Q = problem.n, problem.T, problem.BBt
    target = problem.sigma_fin

    def gap(A):
        return constant_endpoint(A, problem.sigma_init, Q, T) - target

    x = A0.ravel().copy()
    for rho in cfg.penalties:
        def f(z, rho=rho):
            G = gap(z.reshape(n, n))
            return float(z @ z + rho * np.sum(G * G))
        res = scipy.optimize.minimize(f, x, method='BFGS',
                                      options={'maxiter': cfg.max_iters,
                                               'gtol': 1e-10})
        x = res.x
    # least-norm Gauss-Newton projection onto the endpoint constraint
    for _ in range(10):
        c = vech(gap(x.reshape(n, n)))
        if np.max(np.abs(c)) < 1e-13:
            break
        Jc = np.empty((c.size, x.size))
        for j in range(x.size):
            e = 1e-7 * (1 + abs(x[j]))
            xp = x.copy()
            xp[j] += e
            Jc[:, j] = (vech(gap(xp.reshape(n, n))) - c) / e
        x = x - np.linalg.lstsq(Jc, c, rcond=None)[0]
    # constrained polish from the projected penalty iterate
    res = scipy.optimize.minimize(
        lambda z: float(z @ z), x, jac=lambda z: 2 * z, method='SLSQP',
        constraints={'type': 'eq', 'fun': lambda z: vech(gap(z.reshape(n, n)))},
        options={'ftol': 1e-15, 'maxiter': 200})
    g0 = np.linalg.norm(gap(x.reshape(n, n)))
    if np.all(np.isfinite(res.x)) and \
            np.linalg.norm(gap(res.x.reshape(n, n))) <= max(g0, 1e-10):
        x = res.x
    A = x.reshape(n, n)
    return A, float(np.linalg.norm(gap(A)))


def solve_temporal_constant(problem, config=None, warm_start=None):
    """Smallest-norm constant gain that steers between the endpoints.

    Penalty method over the ``n^2`` gain entries with a final
    least-norm feasibility projection, from several starts (including
    logarithms of ``sigma_fin^{1/2} R sigma_init^{-1/2}`` for a spread
    of rotations ``R``).  ``warm_start`` (a gain matrix, or a solution
    whose time-averaged gain is used) adds one more start.

    Returns
    -------
    control : ConstantControl
    path : CovariancePath
        Propagated on ``config.grid_size`` nodes.

    Raises
    ------
    InfeasibleWithinBudget
        If no start reaches ``gap <= 1e-4 ||sigma_fin||_F``; the set of
        constant feasible gains may be empty.
    """
    cfg = config or TemporalConfig()
    tol = 1e-4 * np.linalg.norm(problem.sigma_fin)
    starts = _temporal_starts(problem, cfg)
    if warm_start is not None:
        A_w = getattr(warm_start, 'A', warm_start)
        A_w = np.asarray(A_w, dtype=float)
        starts.insert(0, A_w.mean(axis=0) if A_w.ndim == 3 else A_w)
    runs = []
    for A0 in starts:
        A, g = _penalty_solve(problem, A0, cfg)
        runs.append((g <= tol, float(np.sum(A * A)), g, A))
        log.debug("temporal start: |A|^2=%.10g gap=%.2e", runs[-1][1], g)
    feasible = [r for r in runs if r[0]]
    if not feasible:
        raise InfeasibleWithinBudget(
            "no constant gain reached the terminal covariance",
            best=min(runs, key=lambda r: r[2])[3] if runs else None)
    best = min(feasible, key=lambda r: (r[1], tuple(r[3].ravel())))
    A = best[3]
    grid = TimeGrid(cfg.grid_size, problem.T)
    path = propagate_lyapunov(problem, GainTrajectory.constant(grid, A))
    return ConstantControl(A), path


@dataclass(frozen=True)
class ProcrustesConfig:
    resolution: float = 1e-3
    n_starts: int = 6
    seed: int = 0
    max_iters: int = 200
    grad_tol: float = 1e-9


def _rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def _reflection(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [s, -c]])


def _batched_log_objective(G):
    """``||log G||_F^2`` for a stack of 2x2 matrices; inf where no real log."""
    w, V = np.linalg.eig(G)
    scale = np.max(np.abs(w), axis=-1)
    bad = np.any((np.abs(w.imag) <= 1e-12 * scale[:, None]) & (w.real <= 0),
                 axis=-1)
    with np.errstate(all='ignore'):
        L = V @ (np.log(np.where(bad[:, None], 1.0, w))[..., None]
                 * np.linalg.inv(V))
        val = np.sum(np.abs(L) ** 2, axis=(-2, -1)).real
    val[bad | ~np.isfinite(val)] = np.inf
    return val


def _log_objective(G):
    try:
        L = real_log(G)
    except (NoRealLog, SingularMatrix):
        return np.inf
    return float(np.sum(L * L))


def _procrustes_grid(P, Qi, cfg):
    thetas = np.arange(0.0, 2 * np.pi, cfg.resolution)
    best, skipped = None, []
    for name, make in (('rotation', _rotation), ('reflection', _reflection)):
        Rs = np.stack([make(th) for th in thetas])
        vals = _batched_log_objective(P @ Rs @ Qi)
        if not np.any(np.isfinite(vals)):
            skipped.append(name)
            continue
        # refine every grid-local minimum
        prev, nxt = np.roll(vals, 1), np.roll(vals, -1)
        cand = np.flatnonzero(np.isfinite(vals) & (vals <= prev)
                              & (vals <= nxt))
        for k in cand:
            f = lambda th: _log_objective(P @ make(th) @ Qi)
            a, b, c = thetas[k] - cfg.resolution, thetas[k], \
                thetas[k] + cfg.resolution
            fb = f(b)
            if not np.isfinite(fb):
                continue
            try:
                r = scipy.optimize.minimize_scalar(
                    f, bracket=(a, b, c), method='golden',
                    options={'xtol': 1e-10})
                th, val = (r.x, r.fun) if r.fun <= fb else (b, fb)
            except ValueError:
                th, val = b, fb
            key = (val, th % (2 * np.pi))
            if best is None or key < best[0]:
                best = (key, name, th % (2 * np.pi), make(th))
    return best, skipped


def _skew_basis(n):
    basis = []
    for i in range(n):
        for j in range(i + 1, n):
            E = np.zeros((n, n))
            E[i, j], E[j, i] = -1.0, 1.0
            basis.append(E)
    return basis


def _procrustes_gradient(P, Qi, cfg, n):
    """Multi-start descent on O(n) in exponential coordinates.

    Each start ``R0`` is moved along ``R0 expm(X(w))`` with ``X(w)`` a
    skew matrix; ``w`` is driven by BFGS with central-difference
    gradients, restarting the chart at the new point until the gradient
    vanishes.
    """
    basis = np.stack(_skew_basis(n))
    obj = lambda R: _log_objective(P @ R @ Qi)
    starts = _orthogonal_starts(n, cfg.n_starts, cfg.seed)
    flip = np.eye(n)
    flip[0, 0] = -1.0
    starts = starts + [R @ flip for R in starts]
    results, skipped = [], set()
    for R in starts:
        comp = 'rotation' if np.linalg.det(R) > 0 else 'reflection'
        f = obj(R)
        if not np.isfinite(f):
            continue
        for _ in range(5):
            chart = lambda w, R=R: obj(R @ mat_exp(np.tensordot(w, basis, 1)))
            def fun(w):
                v = chart(w)
                return v if np.isfinite(v) else 1e300
            res = scipy.optimize.minimize(
                fun, np.zeros(len(basis)), method='BFGS',
                options={'gtol': cfg.grad_tol, 'maxiter': cfg.max_iters})
            if res.fun >= f:
                break
            R = R @ mat_exp(np.tensordot(res.x, basis, 1))
            f = obj(R)
            if np.linalg.norm(res.x) < 1e-10:
                break
        results.append((f, comp, R))
    for comp in ('rotation', 'reflection'):
        if not any(c == comp for _, c, _ in results):
            skipped.add(comp)
    return results, sorted(skipped)


def solve_procrustes_zero_noise(Sigma0, SigmaT, T, config=None,
                                method='auto'):
    """Minimise ``||log(SigmaT^{1/2} R Sigma0^{-1/2})||_F^2`` over O(n).

    Parameters
    ----------
    method : {'auto', 'grid', 'gradient'}
        ``'grid'`` (n = 2 only): exhaustive scan of the rotation angle on
        both components followed by golden-section refinement of every
        grid-local minimum.  ``'gradient'``: multi-start Riemannian
        gradient descent.  ``'auto'`` picks the grid for n <= 2.

    Returns
    -------
    ProcrustesResult
        ``control.A = log(SigmaT^{1/2} R Sigma0^{-1/2}) / T``.

    Raises
    ------
    NoRealLogAnywhere
        If no orthogonal factor admits a real logarithm.
    """
    cfg = config or ProcrustesConfig()
    Sigma0 = np.atleast_2d(np.asarray(Sigma0, float))
    SigmaT = np.atleast_2d(np.asarray(SigmaT, float))
    n = Sigma0.shape[0]
    P, Qi = spd_sqrt(SigmaT), spd_invsqrt(Sigma0)
    if method == 'auto':
        method = 'grid' if n <= 2 else 'gradient'
    if n == 1:
        R = np.eye(1)
        L = real_log(P @ Qi)
        return ProcrustesResult(R, np.zeros(0), float(L[0, 0] ** 2),
                                'rotation', ConstantControl(L / T),
                                ['reflection'])
    if method == 'grid':
        if n != 2:
            raise ValueError("grid search is only available for n = 2")
        best, skipped = _procrustes_grid(P, Qi, cfg)
        if best is None:
            raise NoRealLogAnywhere("no orthogonal factor has a real log")
        (val, _), comp, th, R = best
        params = np.array([th])
    elif method == 'gradient':
        results, skipped = _procrustes_gradient(P, Qi, cfg, n)
        if not results:
            raise NoRealLogAnywhere("no orthogonal factor has a real log")
        val, comp, R = min(results, key=lambda r: (r[0], tuple(r[2].ravel())))
        params = vech(np.real(scipy.linalg.logm(
            R if comp == 'rotation' else R @ np.diag([-1.0] + [1.0] * (n - 1))
        )))
    else:
        raise ValueError(f"unknown method {method!r}")
    L = real_log(P @ R @ Qi)
    return ProcrustesResult(R, params, float(np.sum(L * L)), comp,
                            ConstantControl(L / T), list(skipped))


def temporal_fonc_check(A, path, T):
    """Stationarity check for a constant gain.

    The adjoint of a constant gain is
    ``Lambda_t = e^{A^T (T-t)} Lambda_T e^{A (T-t)}``; ``Lambda_T`` is
    fitted by least squares to ``T A = int_0^T Lambda_t Sigma_t dt``.

    Returns
    -------
    dict
        ``residual``: Frobenius norm of ``T A - int Lambda Sigma``;
        ``residual_symmetric``: the same for the symmetric parts only;
        ``Lambda_T``: the fitted terminal adjoint.
    """
    A = np.atleast_2d(np.asarray(A, float))
    n = A.shape[0]
    t = path.grid.times
    E = np.stack([mat_exp(A * (T - tk)) for tk in t])
    p = n * (n + 1) // 2
    cols = []
    for i in range(p):
        e = np.zeros(p)
        e[i] = 1.0
        Lam = np.swapaxes(E, -1, -2) @ unvech(e, n) @ E
        integrand = Lam @ path.sigma
        cols.append(scipy.integrate.simpson(integrand, x=t, axis=0).ravel())
    M = np.stack(cols, axis=1)
    target = (T * A).ravel()
    coef = np.linalg.lstsq(M, target, rcond=None)[0]
    R = (target - M @ coef).reshape(n, n)
    return {'residual': float(np.linalg.norm(R)),
            'residual_symmetric': float(np.linalg.norm(sym(R))),
            'Lambda_T': unvech(coef, n)}
