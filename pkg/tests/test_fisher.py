import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from attnsteer.errors import GridMismatch, NotPositiveDefinite
from attnsteer.fisher import (commutant_basis, fisher_bound_check,
                              fisher_cost, fisher_geodesic,
                              verify_geodesic_generator)
from attnsteer.matfun import spd_sqrt
from attnsteer.model import (CovariancePath, GainTrajectory, SteeringProblem, TimeGrid,
                             feasibility_path)

from conftest import SIGMA_FIN, SIGMA_INIT, random_spd


def expected_dim(eigs):
    _, m = np.unique(np.round(eigs, 8), return_counts=True)
    return int(np.sum(m * (m - 1) // 2))


def with_spectrum(rng, eigs):
    Q, _ = np.linalg.qr(rng.standard_normal((len(eigs), len(eigs))))
    return (Q * eigs) @ Q.T


def test_scalar_geodesic():
    pair = fisher_geodesic([[1.0]], [[4.0]], 1.0, TimeGrid(11, 1.0))
    assert pair.A_F[0, 0] == pytest.approx(np.log(2))
    assert np.allclose(pair.path.sigma[:, 0, 0],
                       4.0 ** pair.path.grid.times)
    assert pair.commutant_dim == 0


def test_example_geodesic_endpoints_and_dim():
    g = TimeGrid(201, 1.0)
    pair = fisher_geodesic(SIGMA_INIT, SIGMA_FIN, 1.0, g)
    assert np.array_equal(pair.path.sigma[0], SIGMA_INIT)
    assert np.array_equal(pair.path.sigma[-1], SIGMA_FIN)
    assert pair.commutant_dim == 0
    r1 = verify_geodesic_generator(pair)
    r2 = verify_geodesic_generator(
        fisher_geodesic(SIGMA_INIT, SIGMA_FIN, 1.0, TimeGrid(401, 1.0)))
    assert r1 < 5e-3 and 3.5 < r1 / r2 < 4.5


def test_geodesic_errors():
    with pytest.raises(GridMismatch):
        fisher_geodesic(SIGMA_INIT, SIGMA_FIN, 2.0, TimeGrid(11, 1.0))
    with pytest.raises(NotPositiveDefinite):
        fisher_geodesic(np.diag([1.0, -1.0]), SIGMA_FIN, 1.0,
                        TimeGrid(11, 1.0))


@pytest.mark.parametrize('eigs', [[2.0, 2.0], [3.0, 3.0, 3.0], [1.0, 2.0, 2.0],
                                  [1.0, 2.0, 3.0], [1.5, 1.5, 4.0, 4.0],
                                  [0.5, 0.5, 0.5, 2.0]])
def test_commutant_dimension(eigs):
    M = with_spectrum(np.random.default_rng(len(eigs)), np.array(eigs))
    basis, thr = commutant_basis(M)
    assert len(basis) == expected_dim(eigs)
    assert thr > 0
    for X in basis:
        assert np.allclose(X, -X.T)
        assert np.abs(X @ M - M @ X).max() < 1e-9
        assert np.linalg.norm(X) == pytest.approx(1.0)


def test_commutant_generators_stay_on_geodesic():
    rng = np.random.default_rng(7)
    S0 = random_spd(rng, 3)
    # SigmaT chosen so that M has a repeated eigenvalue
    Rs = spd_sqrt(S0)
    M = with_spectrum(rng, np.array([0.5, 2.0, 2.0]))
    ST = Rs @ M @ Rs
    pair = fisher_geodesic(S0, ST, 1.0, TimeGrid(401, 1.0))
    assert pair.commutant_dim == 1
    base = verify_geodesic_generator(pair)
    assert verify_geodesic_generator(pair, [3.0]) < 10 * base + 1e-6
    off = rng.standard_normal((3, 3))
    assert verify_geodesic_generator(pair, [0.0], off - off.T) > 1e-2
    with pytest.raises(ValueError):
        verify_geodesic_generator(pair, [1.0, 2.0])


def test_fisher_cost_zero_on_geodesic():
    g = TimeGrid(201, 1.0)
    pair = fisher_geodesic(SIGMA_INIT, SIGMA_FIN, 1.0, g)
    gains = GainTrajectory.constant(g, pair.A_F)
    for beta in (0.0, 0.5, 1.0):
        assert fisher_cost(beta, gains, pair.path)[0] <= 1e-10
    with pytest.raises(ValueError):
        fisher_cost(1.5, gains, pair.path)


def test_fisher_cost_symmetric_gain_has_no_asymmetry_at_identity():
    g = TimeGrid(11, 1.0)
    path = CovariancePath(g, np.tile(np.eye(2), (11, 1, 1)))
    sym_gain = GainTrajectory.constant(g, np.array([[1.0, 0.3], [0.3, -1.0]]))
    assert fisher_cost(1.0, sym_gain, path)[1] == 0.0
    skew_gain = GainTrajectory.constant(g, np.array([[0.0, 1.0], [-1.0, 0.0]]))
    # D = A - A^T = 2A, ||D||_I^2 = 4 ||A||^2 = 8
    assert fisher_cost(1.0, skew_gain, path)[0] == pytest.approx(8.0)


def test_bound_check_on_solution(example, example_half):
    for beta in (0.25, 0.5, 0.75):
        F, K, J, ok = fisher_bound_check(example, example_half, beta)
        assert ok and F <= K * J
        assert J == pytest.approx(example_half.J_value, rel=1e-12)
    with pytest.raises(ValueError):
        fisher_bound_check(example.with_alpha(1.0), example_half, 0.5)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([2, 3]),
       st.floats(0.1, 0.9), st.floats(0.1, 0.9))
def test_bound_on_feasibility_paths(seed, n, alpha, beta):
    rng = np.random.default_rng(seed)
    p = SteeringProblem(random_spd(rng, n), random_spd(rng, n),
                        0.3 * rng.standard_normal((n, n)), 1.0, alpha)
    gains, path = feasibility_path(p, TimeGrid(101, 1.0))

    class Candidate:
        pass
    c = Candidate()
    c.gains, c.path = gains, path
    assert fisher_bound_check(p, c, beta)[3]
