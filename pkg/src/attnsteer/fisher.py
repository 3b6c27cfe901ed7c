"""Fisher-Rao geodesic between Gaussian covariances and its generators.

With ``M = Sigma0^{-1/2} SigmaT Sigma0^{-1/2}`` the geodesic is
``Sigma_t = Sigma0^{1/2} M^{t/T} Sigma0^{1/2}``.  The constant gains
that drive the Lyapunov flow along it form the affine family
``A_F + Sigma0^{1/2} L_M Sigma0^{-1/2}``, where ``L_M`` is the set of
antisymmetric matrices commuting with ``M``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch
from .limits import _skew_basis
from .model import CovariancePath, attention_cost, trapezoid
from .matfun import check_spd, spd_invsqrt, spd_log, spd_pow, spd_sqrt

__all__ = ['FisherPair', 'fisher_geodesic', 'commutant_basis',
           'verify_geodesic_generator', 'fisher_cost', 'fisher_bound_check']


@dataclass(frozen=True)
class FisherPair:
    A_F: np.ndarray
    path: CovariancePath
    M: np.ndarray
    C: np.ndarray
    commutant_basis: list
    commutant_threshold: float
    T: float

    @property
    def commutant_dim(self):
        return len(self.commutant_basis)


def commutant_basis(M, rtol=1e-10):
    """Orthonormal basis of antisymmetric ``X`` with ``XM = MX``.

    Null space of the commutator restricted to antisymmetric matrices,
    by SVD.  Singular values below ``rtol * max(s_max, ||M||_2)`` count
    as zero; the ``||M||`` floor keeps ``M = cI`` (where every
    singular value is rounding noise) from being misread.

    Returns
    -------
    basis : list of ndarray
    threshold : float
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    E = _skew_basis(n)
    if not E:
        return [], 0.0
    K = np.stack([(X @ M - M @ X).ravel() for X in E], axis=1)
    _, s, Vt = np.linalg.svd(K)
    thr = rtol * max(s[0], np.linalg.norm(M, 2))
    null = Vt[np.sum(s > thr):]
    basis = [np.tensordot(v, np.stack(E), 1) / np.sqrt(2) for v in null]
    return basis, float(thr)


def fisher_geodesic(Sigma0, SigmaT, T, grid):
    """Fisher-Rao geodesic and the canonical generator ``A_F``.

    Examples
    --------
    >>> from attnsteer.model import TimeGrid
    >>> pair = fisher_geodesic([[1.0]], [[4.0]], 1.0, TimeGrid(11, 1.0))
    >>> round(float(pair.A_F[0, 0]), 12) == round(float(np.log(2)), 12)
    True
    """
    S0 = check_spd(Sigma0, "Sigma0")
    ST = check_spd(SigmaT, "SigmaT")
    if not np.isclose(grid.T, T, rtol=1e-12, atol=0):
        raise GridMismatch("grid horizon differs from T")
    R, Ri = spd_sqrt(S0), spd_invsqrt(S0)
    M = check_spd(Ri @ ST @ Ri, "M")
    C = spd_log(M)
    A_F = R @ C @ Ri / (2 * T)
    sig = np.stack([R @ spd_pow(M, t / T) @ R for t in grid.times])
    sig = 0.5 * (sig + sig.swapaxes(-1, -2))
    sig[0], sig[-1] = S0, ST
    basis, thr = commutant_basis(M)
    return FisherPair(A_F, CovariancePath(grid, sig), M, C, basis, thr, T)


def verify_geodesic_generator(pair, X_coeffs=None, extra_skew=None):
    """Lyapunov residual of a candidate generator along the geodesic.

    The candidate is ``A_F + Sigma0^{1/2} X Sigma0^{-1/2}`` with
    ``X = sum c_i basis_i`` (zero when ``X_coeffs`` is omitted), plus
    ``extra_skew`` if given, for checks outside the commutant.  ``dSigma/dt`` is taken by second-order
    finite differences, so an admissible generator leaves an ``O(h^2)``
    residual.

    Returns
    -------
    float
        ``max_t ||dSigma/dt - A Sigma - Sigma A^T||_F``.
    """
    n = pair.A_F.shape[0]
    X = np.zeros((n, n))
    if X_coeffs is None:
        X_coeffs = np.zeros(len(pair.commutant_basis))
    coeffs = np.asarray(X_coeffs, dtype=float).ravel()
    if coeffs.size != len(pair.commutant_basis):
        raise ValueError("need one coefficient per commutant basis element")
    if not np.all(np.isfinite(coeffs)):
        raise ValueError("coefficients must be finite")
    for c, B in zip(coeffs, pair.commutant_basis):
        X = X + c * B
    if extra_skew is not None:
        X = X + np.asarray(extra_skew, dtype=float)
    S0 = pair.path.sigma[0]
    A = pair.A_F + spd_sqrt(S0) @ X @ spd_invsqrt(S0)
    sig = pair.path.sigma
    d = np.gradient(sig, pair.path.grid.h, axis=0, edge_order=2)
    AS = A @ sig
    r = d - AS - AS.swapaxes(-1, -2)
    return float(np.max(np.linalg.norm(r, axis=(-2, -1))))


def fisher_cost(beta, gains, path):
    """Fisher geodesic-inducing cost, by trapezoid quadrature.

    Returns
    -------
    F_total, F_asym, F_temporal : float
        ``F_asym = int ||A - Sigma A^T Sigma^{-1}||_Sigma^2``,
        ``F_temporal = int tr(A' Sigma A'^T)`` and
        ``F_total = beta F_asym + (1 - beta) F_temporal``.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    g, p = gains.grid, path.grid
    if g.N != p.N or g.T != p.T:
        raise GridMismatch("gains and path live on different grids")
    A, S, Ad = gains.A, path.sigma, gains.A_dot
    D = A - S @ A.swapaxes(-1, -2) @ np.linalg.inv(S)
    asym = np.einsum('kij,kjl,kil->k', D, S, D)
    temp = np.einsum('kij,kjl,kil->k', Ad, S, Ad)
    Fa, Ft = trapezoid(asym, g.h), trapezoid(temp, g.h)
    return float(beta * Fa + (1 - beta) * Ft), float(Fa), float(Ft)


def fisher_bound_check(problem, solution, beta):
    """Check ``F_beta <= K J_alpha`` on a solved trajectory.

    ``c`` and ``C`` are the smallest and largest covariance eigenvalues
    realised along the path, and
    ``K = max(4 beta C^2 / (alpha c), (1 - beta) / (1 - alpha))``.

    Returns
    -------
    F_value, K, J_value : float
    satisfied : bool
        ``F_value <= K J_value (1 + 1e-9)``.
    """
    alpha = problem.alpha
    if not 0.0 < alpha < 1.0 or not 0.0 < beta < 1.0:
        raise ValueError("need 0 < alpha < 1 and 0 < beta < 1")
    gains, path = solution.gains, solution.path
    c, C = path.eigenvalue_range()
    K = max(4 * beta * C ** 2 / (alpha * c), (1 - beta) / (1 - alpha))
    F, _, _ = fisher_cost(beta, gains, path)
    J, _, _ = attention_cost(problem, gains, path)
    J = float(J)
    return F, float(K), J, bool(F <= K * J * (1 + 1e-9))
