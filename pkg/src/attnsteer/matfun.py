"""Dense matrix functions for small matrices.

Symmetric functions go through a full eigendecomposition; the general
exponential and logarithm are delegated to :mod:`scipy.linalg`.
"""

import numpy as np
import scipy.linalg

from .errors import (NoRealLog, NotPositiveDefinite, OutOfHorizon,
                     SingularMatrix, SymmetryViolation)

SYM_RTOL = 1e-12

__all__ = ['sym', 'skew', 'sym_eig', 'spd_sqrt', 'spd_invsqrt', 'spd_log',
           'spd_exp', 'spd_pow', 'mat_exp', 'real_log', 'state_transition',
           'vech', 'unvech', 'check_spd']


def sym(X):
    return 0.5 * (X + X.swapaxes(-1, -2))


def skew(X):
    return 0.5 * (X - X.swapaxes(-1, -2))


def _as_square(S):
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise ValueError("matrix has non-finite entries")
    return S


def _check_symmetric(S):
    scale = np.max(np.abs(S)) if S.size else 0.0
    if np.max(np.abs(S - S.T), initial=0.0) > SYM_RTOL * scale:
        raise SymmetryViolation(
            f"matrix is not symmetric (max asymmetry "
            f"{np.max(np.abs(S - S.T)):.3e})")
    return sym(S)


def sym_eig(S):
    """Eigendecomposition of a symmetric matrix.

    Parameters
    ----------
    S : ndarray, shape (n, n)
        Symmetric matrix; asymmetry above ``1e-12 * max|S|`` is rejected.

    Returns
    -------
    w : ndarray, shape (n,)
        Eigenvalues in ascending order.
    V : ndarray, shape (n, n)
        Orthonormal eigenvectors (columns).
    """
    S = _check_symmetric(_as_square(S))
    return np.linalg.eigh(S)


def _spd_eig(S):
    w, V = sym_eig(S)
    if w[0] <= 0.0:
        raise NotPositiveDefinite(
            f"smallest eigenvalue {w[0]:.3e} is not positive")
    return w, V


def _apply(w, V, f):
    return sym((V * f(w)) @ V.T)


def spd_sqrt(S):
    """Principal square root of an SPD matrix."""
    w, V = _spd_eig(S)
    return _apply(w, V, np.sqrt)


def spd_invsqrt(S):
    w, V = _spd_eig(S)
    return _apply(w, V, lambda x: 1.0 / np.sqrt(x))


def spd_log(S):
    """Principal (symmetric) logarithm of an SPD matrix."""
    w, V = _spd_eig(S)
    return _apply(w, V, np.log)


def spd_exp(X):
    """Exponential of a symmetric matrix (result is SPD)."""
    w, V = sym_eig(X)
    return _apply(w, V, np.exp)


def spd_pow(S, p):
    """Real power ``S**p`` of an SPD matrix, taken in its eigenbasis."""
    w, V = _spd_eig(S)
    if p == 0:
        return np.eye(len(w))
    return _apply(w, V, lambda x: x ** p)


def mat_exp(A):
    """Matrix exponential of a general real square matrix.

    Scaling and squaring with a Pade core (``scipy.linalg.expm``).
    """
    return scipy.linalg.expm(_as_square(A))


def real_log(G, rtol=1e-8):
    """Real principal logarithm of a general square matrix.

    Only matrices without eigenvalues on the closed negative real axis
    are accepted; this is sufficient (not necessary) for a real
    logarithm to exist.

    Raises
    ------
    SingularMatrix
        If ``G`` is numerically singular.
    NoRealLog
        If ``G`` has a real eigenvalue ``<= 0``.
    """
    G = _as_square(G)
    w = np.linalg.eigvals(G)
    scale = max(np.max(np.abs(w)), np.finfo(float).tiny)
    if np.min(np.abs(w)) <= 1e-14 * scale:
        raise SingularMatrix("matrix is numerically singular")
    on_axis = (np.abs(w.imag) <= 1e-12 * scale) & (w.real <= 0.0)
    if np.any(on_axis):
        raise NoRealLog("matrix has eigenvalues on the closed negative axis")
    L = scipy.linalg.logm(G)
    L = np.real_if_close(L, tol=1e6)
    if np.iscomplexobj(L):
        raise NoRealLog("principal logarithm is not real")
    err = np.linalg.norm(scipy.linalg.expm(L) - G) / np.linalg.norm(G)
    if err > rtol:
        raise NoRealLog(f"logarithm failed round-trip check ({err:.2e})")
    return L


def check_spd(S, name="matrix"):
    """Validate and return a symmetrized SPD matrix."""
    S = np.asarray(S, dtype=float)
    try:
        _spd_eig(S)
    except SymmetryViolation as exc:
        raise SymmetryViolation(f"{name}: {exc}") from None
    except NotPositiveDefinite as exc:
        raise NotPositiveDefinite(f"{name}: {exc}") from None
    return sym(S)


def vech(S):
    """Upper-triangular entries (row-major) of symmetric matrices.

    Works on stacks: ``(..., n, n) -> (..., n(n+1)/2)``.
    """
    S = np.asarray(S)
    n = S.shape[-1]
    iu = np.triu_indices(n)
    return S[..., iu[0], iu[1]]


def unvech(v, n):
    v = np.asarray(v)
    out = np.zeros(v.shape[:-1] + (n, n), dtype=v.dtype)
    iu = np.triu_indices(n)
    out[..., iu[0], iu[1]] = v
    out[..., iu[1], iu[0]] = v
    return out


def _rk4_linear_segment(Phi, A0, A1, dt, steps):
    # dPhi/dt = A(t) Phi with A linear on [0, steps*dt] from A0 to A1
    total = steps * dt
    def A_at(tau):
        return A0 + (A1 - A0) * (tau / total) if total != 0 else A0
    tau = 0.0
    for _ in range(steps):
        Ah = A_at(tau)
        Am = A_at(tau + 0.5 * dt)
        Ae = A_at(tau + dt)
        k1 = Ah @ Phi
        k2 = Am @ (Phi + 0.5 * dt * k1)
        k3 = Am @ (Phi + 0.5 * dt * k2)
        k4 = Ae @ (Phi + dt * k3)
        Phi = Phi + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        tau += dt
    return Phi


def _interp_gain(times, A, t):
    k = int(np.clip(np.searchsorted(times, t, side='right') - 1,
                    0, len(times) - 2))
    w = (t - times[k]) / (times[k + 1] - times[k])
    return (1.0 - w) * A[k] + w * A[k + 1]


def state_transition(gains, t, s):
    """State-transition matrix ``Phi(t, s)`` of ``x' = A_t x``.

    The gain is interpolated linearly between grid nodes and the ODE is
    integrated with classical RK4, breaking at every grid node and
    taking two steps per grid interval (the caller's spacing halved).

    Parameters
    ----------
    gains : GainTrajectory
        Anything with ``grid.times`` and ``A`` of shape ``(N, n, n)``.
    t, s : float
        Final and initial time; ``t < s`` integrates backwards.
    """
    times = np.asarray(gains.grid.times)
    A = np.asarray(gains.A)
    T = times[-1]
    tol = 1e-12 * max(T, 1.0)
    for x in (t, s):
        if x < -tol or x > T + tol:
            raise OutOfHorizon(f"time {x} outside [0, {T}]")
    t = float(np.clip(t, 0.0, T))
    s = float(np.clip(s, 0.0, T))
    n = A.shape[-1]
    if t == s:
        return np.eye(n)
    lo, hi = min(s, t), max(s, t)
    inner = times[(times > lo) & (times < hi)]
    breaks = np.concatenate(([lo], inner, [hi]))
    h = times[1] - times[0]
    if t < s:
        breaks = breaks[::-1]
    Phi = np.eye(n)
    for a, b in zip(breaks[:-1], breaks[1:]):
        steps = max(1, int(np.ceil(abs(b - a) / (0.5 * h) - 1e-9)))
        Phi = _rk4_linear_segment(Phi, _interp_gain(times, A, a),
                                  _interp_gain(times, A, b),
                                  (b - a) / steps, steps)
    return Phi
