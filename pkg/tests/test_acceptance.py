"""End-to-end acceptance criteria, one test per criterion.

Each test prints a single PASS/FAIL line; the lines are collected and
repeated in the terminal summary.
"""

import hashlib
import os
import subprocess
import sys
import time

import numpy as np
import pytest

import conftest
from conftest import EXAMPLE_B, SIGMA_FIN, SIGMA_INIT, random_spd

from attnsteer.direct_opt import DirectConfig, minimize_direct
from attnsteer.errors import IndefiniteCovariance, NoConvergence
from attnsteer.fisher import (commutant_basis, fisher_bound_check,
                              fisher_cost, fisher_geodesic)
from attnsteer.fonc_bvp import SolverConfig, continuation_sweep, solve_fonc
from attnsteer.limits import (constant_endpoint, solve_procrustes_zero_noise,
                              solve_spatial, solve_temporal_constant,
                              spatial_invariants_check,
                              zero_noise_closed_form)
from attnsteer.mc_sim import SimConfig, simulate_paths
from attnsteer.model import (GainTrajectory, SteeringProblem, TimeGrid,
                             attention_cost, feasibility_path,
                             spectral_bounds)


def report(tag, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {tag}: {detail}"
    print(line)
    conftest.ACCEPTANCE_REPORT.append(line)
    assert ok, line


def example(alpha, B=EXAMPLE_B):
    return SteeringProblem(SIGMA_INIT, SIGMA_FIN, B, 1.0, alpha)


def max_adot(sol):
    return float(np.linalg.norm(sol.A_dot, axis=(-2, -1)).max())


class Candidate:
    """A (gains, path) pair that is feasible but not optimal."""

    def __init__(self, gains, path):
        self.gains, self.path = gains, path


@pytest.fixture(scope='module')
def random_solutions():
    """FONC solutions on 50 random SPD endpoint pairs, n in {2, 3}."""
    rng = np.random.default_rng(20240501)
    out, failed = [], 0
    cfg = SolverConfig(grid_size=101)
    for k in range(50):
        n = 2 + k % 2
        B = 0.3 * rng.standard_normal((n, n))
        alpha = float(rng.uniform(0.2, 0.9))
        p = SteeringProblem(random_spd(rng, n), random_spd(rng, n), B, 1.0,
                            alpha)
        try:
            out.append((p, solve_fonc(p, cfg)))
        except (NoConvergence, IndefiniteCovariance):
            failed += 1
    return out, failed


def test_ac01_scalar_closed_form():
    p = SteeringProblem([[1.0]], [[4.0]], [[0.0]], 1.0, 1.0)
    t0 = time.perf_counter()
    sol = solve_spatial(p)
    dt = time.perf_counter() - t0
    exact = np.log(2.0) ** 2
    err = abs(sol.J_value - exact) / exact
    report('AC1', sol.converged and err <= 1e-5 and dt < 1.0,
           f"J={sol.J_value:.9f} vs (log 2)^2={exact:.9f}, rel err "
           f"{err:.1e}, {dt:.2f}s")


def test_ac02_example_structure():
    t0 = time.perf_counter()
    # (a) constant gain for alpha = 0
    ctrl, path = solve_temporal_constant(example(0.0))
    gains0 = GainTrajectory.constant(path.grid, ctrl.A)
    gap = float(np.linalg.norm(constant_endpoint(
        ctrl.A, SIGMA_INIT, EXAMPLE_B @ EXAMPLE_B.T, 1.0) - SIGMA_FIN))
    ok_a = np.all(gains0.A_dot == 0.0) and np.all(gains0.A == ctrl.A) \
        and gap <= 1e-4
    # (b) and (c) from one continuation sweep
    sols = continuation_sweep(example(0.5), SolverConfig(),
                              (0.99, 0.5, 0.01))
    s99, s50, s01 = sols
    ok_b = s50.converged and s50.residual_norm <= 1e-8 \
        and 0 < max_adot(s50) < max_adot(s99)
    Jt = [s.J_temporal for s in sols]
    ok_c = all(s.converged for s in sols) and Jt[0] >= Jt[1] >= Jt[2]
    dt = time.perf_counter() - t0
    report('AC2', bool(ok_a and ok_b and ok_c and dt < 60),
           f"(a) max|A'|=0, gap={gap:.1e}; (b) residual "
           f"{s50.residual_norm:.1e}, max|A'| {max_adot(s50):.3f} < "
           f"{max_adot(s99):.3f}; (c) J_temporal "
           f"{Jt[0]:.4g} >= {Jt[1]:.4g} >= {Jt[2]:.3g}; {dt:.1f}s")


@pytest.mark.slow
def test_ac03_direct_matches_fonc():
    t0 = time.perf_counter()
    errs = []
    for a in (0.25, 0.5, 0.75):
        p = example(a)
        fonc = solve_fonc(p)
        direct = minimize_direct(p, DirectConfig(n_starts=5))
        errs.append(abs(fonc.J_value - direct.J_value) / fonc.J_value)
    dt = time.perf_counter() - t0
    report('AC3', max(errs) <= 1e-3 and dt < 600,
           "rel |J_fonc - J_direct| = "
           + ", ".join(f"{e:.1e}" for e in errs)
           + f" at alpha 0.25/0.5/0.75, 5 starts each, {dt:.0f}s")


def test_ac04_spectral_bounds(random_solutions):
    sols, failed = random_solutions
    extra = [(example(0.5), solve_fonc(example(0.5))),
             (example(1.0), solve_spatial(example(1.0)))]
    violations = checked = 0
    for p, sol in sols + extra:
        for J in (max(sol.J_value, 0.0), None):
            b = spectral_bounds(p, J)
            checked += 1
            violations += not b.contains(sol.path)
    report('AC4', violations == 0 and len(sols) == 50,
           f"{violations} violations in {checked} checks "
           f"({len(sols)} random solutions converged, {failed} failed)")


def _rk4_zero_noise(A0, S0, T, steps):
    def f(A, S):
        return A @ A.T - A.T @ A, A @ S + S @ A.T
    A, S = A0.copy(), S0.copy()
    h = T / steps
    for _ in range(steps):
        k1 = f(A, S)
        k2 = f(A + h / 2 * k1[0], S + h / 2 * k1[1])
        k3 = f(A + h / 2 * k2[0], S + h / 2 * k2[1])
        k4 = f(A + h * k3[0], S + h * k3[1])
        A = A + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        S = S + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return A, S


def test_ac05_zero_noise_invariants():
    rng = np.random.default_rng(5)
    inv = []
    problems = [example(1.0, np.zeros((2, 2)))]
    for k in range(5):
        n = 2 + k % 2
        problems.append(SteeringProblem(random_spd(rng, n),
                                        random_spd(rng, n),
                                        np.zeros((n, n)), 1.0, 1.0))
    for p in problems:
        d = spatial_invariants_check(solve_spatial(p).A)
        inv.append(max(d['skew_deviation'], d['trace_drift']))
    closed = []
    for k in range(20):
        n = 2 + k % 2
        A0 = 0.7 * rng.standard_normal((n, n))
        S0 = random_spd(rng, n)
        T = float(rng.uniform(0.5, 1.5))
        A_ref, S_ref = _rk4_zero_noise(A0, S0, T, 4000)
        A_cf, S_cf = zero_noise_closed_form(A0, S0, T)
        closed.append(max(np.abs(A_cf - A_ref).max(),
                          np.abs(S_cf - S_ref).max()))
    report('AC5', max(inv) <= 1e-6 and max(closed) <= 1e-8,
           f"invariant drift {max(inv):.1e} over {len(problems)} solves; "
           f"closed form vs RK4 {max(closed):.1e} over 20 draws")


def test_ac06_procrustes_grid():
    rng = np.random.default_rng(6)
    diffs = []
    for _ in range(20):
        S0, S1 = random_spd(rng, 2), random_spd(rng, 2)
        T = float(rng.uniform(0.5, 2.0))
        g = solve_procrustes_zero_noise(S0, S1, T, method='grid')
        d = solve_procrustes_zero_noise(S0, S1, T, method='gradient')
        diffs.append(abs(g.objective - d.objective))
    report('AC6', max(diffs) <= 1e-6,
           f"max |gradient - grid| objective {max(diffs):.1e} on 20 pairs")


def test_ac07_fisher_bound(random_solutions):
    sols, _ = random_solutions
    solved = sols + [(example(a), solve_fonc(example(a)))
                     for a in (0.25, 0.5, 0.75)]
    rng = np.random.default_rng(7)
    feasible = []
    for k in range(50):
        n = 2 + k % 2
        p = SteeringProblem(random_spd(rng, n), random_spd(rng, n),
                            0.3 * rng.standard_normal((n, n)), 1.0,
                            float(rng.uniform(0.1, 0.9)))
        feasible.append((p, Candidate(*feasibility_path(p, TimeGrid(201,
                                                                    1.0)))))
    violations = checks = 0
    worst = 0.0
    for p, cand in solved + feasible:
        for beta in (0.25, 0.5, 0.75):
            F, K, J, ok = fisher_bound_check(p, cand, beta)
            checks += 1
            violations += not ok
            worst = max(worst, F / (K * J))
    report('AC7', violations == 0,
           f"{violations} violations in {checks} checks, "
           f"max F/(K J) = {worst:.3f}")


def test_ac08_fisher_consistency():
    rng = np.random.default_rng(8)
    costs = []
    pairs = [(SIGMA_INIT, SIGMA_FIN)] + [
        (random_spd(rng, n), random_spd(rng, n)) for n in (2, 3, 3, 4)]
    for S0, S1 in pairs:
        for N in (201, 401):
            g = TimeGrid(N, 1.0)
            pair = fisher_geodesic(S0, S1, 1.0, g)
            gains = GainTrajectory.constant(g, pair.A_F)
            costs.append(max(fisher_cost(b, gains, pair.path)[0]
                             for b in (0.25, 0.5, 0.75)))
    cases = [[2.0, 2.0], [1.0, 3.0], [1.0, 1.0, 1.0], [1.0, 2.0, 2.0],
             [1.0, 2.0, 3.0], [0.5, 0.5, 3.0, 3.0], [2.0, 2.0, 2.0, 5.0]]
    wrong = []
    for eigs in cases:
        Q, _ = np.linalg.qr(rng.standard_normal((len(eigs), len(eigs))))
        M = (Q * eigs) @ Q.T
        _, mult = np.unique(eigs, return_counts=True)
        want = int(np.sum(mult * (mult - 1) // 2))
        got = len(commutant_basis(M)[0])
        if got != want:
            wrong.append((eigs, got, want))
    report('AC8', max(costs) <= 1e-10 and not wrong,
           f"max F at Fisher pair {max(costs):.1e}; commutant dims "
           f"{len(cases) - len(wrong)}/{len(cases)} correct")


def test_ac09_monte_carlo(example_half):
    p = example(0.5)
    t0 = time.perf_counter()
    res = simulate_paths(p, example_half.gains,
                         SimConfig(seed=20240501, num_paths=20000))
    dt = time.perf_counter() - t0
    means = {}
    for P in (5000, 20000):
        means[P] = np.mean([simulate_paths(
            p, example_half.gains, SimConfig(seed=s, num_paths=P)).deviation
            for s in range(8)])
    ratio = means[5000] / means[20000]
    report('AC9', res.deviation <= 0.05 and dt < 30 and 1.4 <= ratio <= 2.6,
           f"deviation {100 * res.deviation:.2f}% at P=20000 in {dt:.1f}s; "
           f"8-seed mean ratio P=5000/P=20000 = {ratio:.2f}")


def _digest(folder):
    out = {}
    for root, _, files in os.walk(folder):
        for f in sorted(files):
            if f.endswith('.csv'):
                path = os.path.join(root, f)
                with open(path, 'rb') as fh:
                    out[os.path.relpath(path, folder)] = hashlib.sha256(
                        fh.read()).hexdigest()
    return out


def test_ac10_determinism(tmp_path):
    env = dict(os.environ, ATTNSTEER_THREADS='2')
    digests = []
    for run in ('a', 'b'):
        base = tmp_path / run
        for cmd in (['solve', 'paper_sec8', '--out', str(base / 'solve')],
                    ['simulate', 'paper_sec8', '--paths', '3000',
                     '--seed', '11', '--out', str(base / 'sim')],
                    ['fisher', 'paper_sec8', '--out', str(base / 'fisher')]):
            r = subprocess.run([sys.executable, '-m', 'attnsteer.cli'] + cmd,
                               env=env, capture_output=True, timeout=300)
            assert r.returncode == 0, r.stderr.decode()
        digests.append(_digest(base))
    same = digests[0] == digests[1] and len(digests[0]) >= 6
    report('AC10', same,
           f"{len(digests[0])} CSV files byte-identical across two runs")
