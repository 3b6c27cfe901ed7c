import numpy as np
import pytest

from attnsteer.errors import (BoundsUnavailable, GridMismatch,
                              IndefiniteCovariance, NotPositiveDefinite,
                              SymmetryViolation)
from attnsteer.model import (CovariancePath, FoncSolution, GainTrajectory,
                             SteeringProblem, TimeGrid, attention_cost,
                             feasibility_path, fonc_residuals,
                             propagate_lyapunov, spectral_bounds)

from conftest import EXAMPLE_B, SIGMA_FIN, SIGMA_INIT


def scalar(s0, s1, b=0.0, T=1.0, alpha=1.0):
    return SteeringProblem([[s0]], [[s1]], [[b]], T, alpha)


# --------------------------------------------------------------- types

def test_problem_validation():
    with pytest.raises(NotPositiveDefinite):
        SteeringProblem(np.diag([1.0, -1.0]), np.eye(2), np.eye(2))
    with pytest.raises(SymmetryViolation):
        SteeringProblem([[1.0, 0.5], [0.0, 1.0]], np.eye(2), np.eye(2))
    with pytest.raises(ValueError):
        SteeringProblem(np.eye(2), np.eye(2), np.eye(2), T=0.0)
    with pytest.raises(ValueError):
        SteeringProblem(np.eye(2), np.eye(2), np.eye(2), alpha=1.5)
    with pytest.raises(ValueError):
        SteeringProblem(np.eye(2), np.eye(3), np.eye(2))
    p = SteeringProblem(SIGMA_INIT, SIGMA_FIN, EXAMPLE_B)
    assert p.n == 2 and p.m == 2
    assert not p.sigma_init.flags.writeable
    assert p.with_alpha(0.25).alpha == 0.25


def test_time_grid():
    g = TimeGrid(201, 2.5)
    assert g.times[0] == 0.0 and g.times[-1] == 2.5
    assert np.ptp(np.diff(g.times)) < 1e-12 * 2.5
    assert g.refined().N == 401
    with pytest.raises(ValueError):
        TimeGrid(1, 1.0)


# --------------------------------------------------------- propagation

def test_propagate_frozen_dynamics():
    p = SteeringProblem(SIGMA_INIT, SIGMA_FIN, np.zeros((2, 2)))
    g = TimeGrid(21, 1.0)
    path = propagate_lyapunov(p, GainTrajectory.constant(g, np.zeros((2, 2))))
    assert np.allclose(path.sigma, SIGMA_INIT, atol=1e-14)
    assert np.array_equal(path.sigma[0], p.sigma_init)


@pytest.mark.parametrize('a, b', [(0.7, 0.5), (-0.4, 1.2), (1.3, 0.0)])
def test_propagate_scalar_closed_form(a, b):
    p = scalar(1.5, 2.0, b)
    g = TimeGrid(101, 1.0)
    path = propagate_lyapunov(p, GainTrajectory.constant(g, [[a]]))
    t = g.times
    exact = np.exp(2 * a * t) * 1.5 + b * b * (np.exp(2 * a * t) - 1) / (2 * a)
    assert np.abs(path.sigma[:, 0, 0] / exact - 1).max() < 1e-9


def test_propagate_pure_diffusion():
    p = SteeringProblem(SIGMA_INIT, SIGMA_FIN, np.eye(2))
    g = TimeGrid(11, 1.0)
    path = propagate_lyapunov(p, GainTrajectory.constant(g, np.zeros((2, 2))))
    assert np.allclose(path.sigma[-1], SIGMA_INIT + np.eye(2), atol=1e-13)


def test_propagate_trace_dynamics_and_symmetry():
    rng = np.random.default_rng(0)
    p = SteeringProblem(SIGMA_INIT, SIGMA_FIN, EXAMPLE_B)
    g = TimeGrid(201, 1.0)
    gains = GainTrajectory.from_gains(
        g, 0.3 * rng.standard_normal((2, 2)) + np.sin(g.times)[:, None, None]
        * np.array([[0.2, -0.5], [0.1, 0.0]]))
    S = propagate_lyapunov(p, gains).sigma
    assert np.array_equal(S, np.swapaxes(S, -1, -2))
    tr = np.trace(S, axis1=1, axis2=2)
    dtr = np.gradient(tr, g.h, edge_order=2)
    rhs = 2 * np.einsum('kij,kji->k', gains.A, S) + np.trace(p.BBt)
    assert np.abs(dtr - rhs)[1:-1].max() < 1e-3


def test_propagate_detects_indefinite():
    # the covariance cannot collapse under a linear flow, so force it with
    # a gain whose node values jump violently
    p = scalar(1.0, 1.0)
    g = TimeGrid(3, 1.0)
    gains = GainTrajectory(g, np.array([[[0.0]], [[-80.0]], [[0.0]]]),
                           np.zeros((3, 1, 1)))
    with pytest.raises(IndefiniteCovariance) as info:
        propagate_lyapunov(p, gains, substeps=1)
    assert info.value.node is not None


def test_propagate_grid_mismatch():
    p = scalar(1.0, 2.0, T=2.0)
    g = TimeGrid(11, 1.0)
    with pytest.raises(GridMismatch):
        propagate_lyapunov(p, GainTrajectory.constant(g, [[0.0]]))


# ------------------------------------------------------- attention cost

def test_attention_cost_examples():
    p = scalar(1.0, 1.0, alpha=0.5)
    g = TimeGrid(2001, 1.0)
    z = GainTrajectory.constant(g, [[0.0]])
    path = CovariancePath(g, np.ones((g.N, 1, 1)))
    assert attention_cost(p, z, path) == (0.0, 0.0, 0.0)
    c = GainTrajectory.constant(g, [[0.8]])
    assert attention_cost(p, c, path)[2] == 0.0
    # A_t = t, sigma = 1: (1/2)(1/3) + (1/2)(1) = 2/3
    ramp = GainTrajectory(g, g.times[:, None, None],
                          np.ones((g.N, 1, 1)))
    J, Js, Jt = attention_cost(p, ramp, path)
    assert J == pytest.approx(2 / 3, rel=1e-6)
    assert Js == pytest.approx(1 / 3, rel=1e-6) and Jt == pytest.approx(1.0)


def test_attention_cost_grid_mismatch():
    p = scalar(1.0, 1.0, alpha=0.5)
    g1, g2 = TimeGrid(11, 1.0), TimeGrid(21, 1.0)
    with pytest.raises(GridMismatch):
        attention_cost(p, GainTrajectory.constant(g1, [[0.0]]),
                       CovariancePath(g2, np.ones((21, 1, 1))))


def test_attention_cost_refinement_is_second_order():
    p = SteeringProblem(SIGMA_INIT, SIGMA_FIN, EXAMPLE_B, alpha=0.5)
    Js = []
    for N in (51, 101, 201, 401):
        g = TimeGrid(N, 1.0)
        gains, path = feasibility_path(p, g)
        Js.append(attention_cost(p, gains, path)[0])
    d = np.abs(np.diff(Js))
    ratios = d[:-1] / d[1:]
    assert np.all((ratios > 3.5) & (ratios < 4.5))


# ---------------------------------------------------- feasibility path

def test_feasibility_path_trivial_and_scalar():
    p = SteeringProblem(SIGMA_INIT, SIGMA_INIT, np.zeros((2, 2)))
    gains, path = feasibility_path(p, TimeGrid(11, 1.0))
    assert np.abs(gains.A).max() == 0 and np.allclose(path.sigma, SIGMA_INIT)
    p = scalar(1.0, 2.0)
    g = TimeGrid(11, 1.0)
    gains, _ = feasibility_path(p, g)
    assert np.allclose(gains.A[:, 0, 0], 1 / (2 * (1 + g.times)))


def test_feasibility_path_example():
    p = SteeringProblem(SIGMA_INIT, SIGMA_FIN, EXAMPLE_B, alpha=0.5)
    g = TimeGrid(201, 1.0)
    gains, path = feasibility_path(p, g)
    assert np.array_equal(path.sigma[0], p.sigma_init)
    assert np.array_equal(path.sigma[-1], p.sigma_fin)
    for a in (0.0, 0.5, 1.0):
        assert np.isfinite(attention_cost(p.with_alpha(a), gains, path)[0])
    # the gains reproduce the path through the Lyapunov flow
    prop = propagate_lyapunov(p, gains)
    assert np.abs(prop.sigma - path.sigma).max() < 1e-3
    # closed-form derivative against finite differences on a fine grid
    fine, _ = feasibility_path(p, TimeGrid(4001, 1.0))
    fd = np.gradient(fine.A, 1 / 4000, axis=0, edge_order=2)
    assert np.abs(fd - fine.A_dot).max() < 1e-3 * np.abs(fine.A_dot).max()


# ----------------------------------------------------- spectral bounds

def test_spectral_bounds_zero_J():
    p = SteeringProblem(SIGMA_INIT, SIGMA_FIN, np.zeros((2, 2)), alpha=0.5)
    b = spectral_bounds(p, 0.0)
    w = np.linalg.eigvalsh(SIGMA_INIT)
    assert b.c_lower == pytest.approx(w[0]) and b.C_upper == pytest.approx(w[1])


def test_spectral_bounds_scalar_closed_form():
    p = scalar(1.0, 4.0, alpha=1.0)
    b = spectral_bounds(p, np.log(2) ** 2 / 4)
    assert b.c_lower == pytest.approx(0.5) and b.C_upper == pytest.approx(2.0)


def test_spectral_bounds_alpha_zero_unavailable():
    p = SteeringProblem(SIGMA_INIT, SIGMA_FIN, EXAMPLE_B, alpha=0.0)
    with pytest.raises(BoundsUnavailable):
        spectral_bounds(p)


def test_spectral_bounds_default_uses_feasibility_cost():
    p = SteeringProblem(SIGMA_INIT, SIGMA_FIN, EXAMPLE_B, alpha=0.5)
    g = TimeGrid(201, 1.0)
    gains, path = feasibility_path(p, g)
    J = attention_cost(p, gains, path)[0]
    b = spectral_bounds(p)
    assert b.attention_value_used == pytest.approx(J)
    assert 0 < b.c_lower <= b.C_upper
    assert b.contains(path)


# ------------------------------------------------------ fonc residuals

def _scalar_exact(N):
    # alpha = 1, B = 0, sigma: 1 -> 4; a = log 2, lambda = a / sigma
    p = scalar(1.0, 4.0)
    g = TimeGrid(N, 1.0)
    a = np.log(2)
    sig = np.exp(2 * a * g.times)[:, None, None]
    lam = a / sig
    A = np.full_like(sig, a)
    return p, FoncSolution(g, sig, lam, A, np.zeros_like(A), 1.0)


def test_fonc_residuals_exact_scalar():
    p, sol = _scalar_exact(2001)
    r = fonc_residuals(p, sol)
    assert r.max_node() <= 1e-6
    assert r.boundary() <= 1e-12


def test_fonc_residuals_trivial_zero_problem():
    p = SteeringProblem(np.eye(2), np.eye(2), np.zeros((2, 2)), alpha=0.5)
    g = TimeGrid(21, 1.0)
    Z = np.zeros((21, 2, 2))
    sol = FoncSolution(g, np.tile(np.eye(2), (21, 1, 1)), Z, Z, Z, 0.5)
    r = fonc_residuals(p, sol)
    assert r.max_node() == 0.0 and r.max_mid() == 0.0


def test_fonc_residuals_negative_control():
    p = SteeringProblem(SIGMA_INIT, SIGMA_FIN, EXAMPLE_B, alpha=0.5)
    g = TimeGrid(201, 1.0)
    gains, path = feasibility_path(p, g)
    sol = FoncSolution(g, path.sigma, np.zeros_like(path.sigma), gains.A,
                       gains.A_dot, 0.5)
    r = fonc_residuals(p, sol)
    assert r.stationarity > 1e-2
    assert r.primal < 1e-3  # the path itself is feasible
