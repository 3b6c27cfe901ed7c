"""Command-line front end: ``attnsteer solve|sweep|fisher|simulate``.

Every command reads a JSON problem file, writes JSON/CSV artifacts into
``--out`` and prints exactly one JSON status line on stdout.  Exit codes:
0 success, 2 unreadable problem file or bad arguments, 3 a solver did
not converge (its best iterate is still written).
"""

import argparse
import csv
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (AttnSteerError, InfeasibleWithinBudget, NoConvergence,
                     ProblemFileError, SweepAborted)
from .fisher import fisher_bound_check, fisher_cost, fisher_geodesic
from .fonc_bvp import SolverConfig, continuation_sweep, solve_fonc
from .limits import (TemporalConfig, solve_spatial, solve_temporal_constant,
                     temporal_fonc_check)
from .matfun import spd_sqrt, vech
from .mc_sim import SimConfig, simulate_paths
from .model import (FoncSolution, GainTrajectory, SteeringProblem, TimeGrid,
                    attention_cost, fonc_residuals, spectral_bounds)

log = logging.getLogger('attnsteer')

EXIT_OK, EXIT_PARSE, EXIT_SOLVER = 0, 2, 3
FMT = '%.16e'

__all__ = ['main', 'load_problem', 'EXIT_OK', 'EXIT_PARSE', 'EXIT_SOLVER']


# ------------------------------------------------------------ problem files

def _matrix(doc, key, rows, cols):
    if key not in doc:
        raise ProblemFileError(f"missing key {key!r}", key)
    try:
        M = np.asarray(doc[key], dtype=float)
    except (TypeError, ValueError):
        raise ProblemFileError(f"{key!r} is not numeric", key) from None
    if M.size != rows * cols:
        raise ProblemFileError(
            f"{key!r} has {M.size} entries, expected {rows}x{cols}", key)
    return M.reshape(rows, cols)


def _number(doc, key, default=None):
    if key not in doc:
        if default is None:
            raise ProblemFileError(f"missing key {key!r}", key)
        return default
    try:
        return float(doc[key])
    except (TypeError, ValueError):
        raise ProblemFileError(f"{key!r} is not a number", key) from None


def _resolve(path):
    p = Path(path)
    if p.exists():
        return p
    # missing files fall back to a bundled problem of the same name
    bundled = resources.files('attnsteer') / 'data' / f"{p.stem}.json"
    if p.suffix in ('', '.json') and bundled.is_file():
        return bundled
    raise ProblemFileError(f"problem file {path!s} not found", 'path')


def load_problem(path):
    """Read a problem file.

    Returns
    -------
    problem : SteeringProblem
    solver : dict
        The optional ``solver`` block (empty if absent).

    Raises
    ------
    ProblemFileError
        ``key`` names the offending entry.
    """
    src = _resolve(path)
    try:
        doc = json.loads(src.read_text())
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"invalid JSON: {exc}", 'json') from None
    if not isinstance(doc, dict):
        raise ProblemFileError("top level must be an object", 'json')
    n = int(_number(doc, 'n'))
    m = int(_number(doc, 'm', n))
    if n < 1 or m < 1:
        raise ProblemFileError("n and m must be positive", 'n')
    mats = {k: _matrix(doc, k, n, n) for k in ('sigma_init', 'sigma_fin')}
    B = _matrix(doc, 'B', n, m)
    T = _number(doc, 'T', 1.0)
    alpha = _number(doc, 'alpha', 0.5)
    try:
        problem = SteeringProblem(mats['sigma_init'], mats['sigma_fin'], B, T,
                                  alpha)
    except ValueError as exc:
        raise ProblemFileError(str(exc), _guess_key(str(exc))) from None
    solver = doc.get('solver', {}) or {}
    if not isinstance(solver, dict):
        raise ProblemFileError("'solver' must be an object", 'solver')
    return problem, solver


def _guess_key(msg):
    for key in ('sigma_init', 'sigma_fin', 'B', 'alpha', 'T'):
        if key in msg:
            return key
    return None


def _solver_config(block, grid_size=None):
    kw = {}
    for key in ('grid_size', 'newton_tol', 'max_newton_iters', 'alpha_clamp',
                'max_bisections'):
        if key in block:
            kw[key] = type(getattr(SolverConfig(), key))(block[key])
    if grid_size is not None:
        kw['grid_size'] = grid_size
    try:
        return SolverConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ProblemFileError(f"solver block: {exc}", 'solver') from None


# ------------------------------------------------------------------ writers

def _vech_names(prefix, n):
    iu = np.triu_indices(n)
    return [f"{prefix}{i + 1}{j + 1}" for i, j in zip(*iu)]


def _vec_names(prefix, n):
    return [f"{prefix}{i + 1}{j + 1}" for i in range(n) for j in range(n)]


def _write_csv(path, header, rows):
    with open(path, 'w', newline='') as fh:
        w = csv.writer(fh, lineterminator='\n')
        w.writerow(header)
        for row in rows:
            w.writerow([FMT % v if isinstance(v, (float, np.floating)) else v
                        for v in row])


def _write_json(path, doc):
    with open(path, 'w') as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write('\n')


def _tolist(x):
    return np.asarray(x, dtype=float).tolist()


def write_trajectories(out, grid, sigma, A, A_dot, contour_scale=1.0,
                       angles=128):
    """``sigma.csv``, ``gain.csv`` and (n >= 2) ``ellipse.csv``."""
    n = sigma.shape[-1]
    t = grid.times
    _write_csv(out / 'sigma.csv', ['t'] + _vech_names('s', n),
               ([t[k]] + list(vech(sigma[k])) for k in range(grid.N)))
    _write_csv(out / 'gain.csv',
               ['t'] + _vec_names('a', n) + _vec_names('adot', n),
               ([t[k]] + list(A[k].ravel()) + list(A_dot[k].ravel())
                for k in range(grid.N)))
    if n < 2:
        return
    th = 2 * np.pi * np.arange(angles) / angles
    circle = np.stack([np.cos(th), np.sin(th)])
    rows = []
    for k in range(grid.N):
        # level set x^T Sigma^{-1} x = s^2 of the first two coordinates
        pts = contour_scale * spd_sqrt(sigma[k][:2, :2]) @ circle
        rows.extend([k, t[k], i, pts[0, i], pts[1, i]]
                    for i in range(angles))
    _write_csv(out / 'ellipse.csv', ['node', 't', 'angle_index', 'x1', 'x2'],
               rows)


def read_gain_csv(path, n):
    data = np.loadtxt(path, delimiter=',', skiprows=1, ndmin=2)
    t = data[:, 0]
    A = data[:, 1:1 + n * n].reshape(-1, n, n)
    Ad = data[:, 1 + n * n:1 + 2 * n * n].reshape(-1, n, n)
    grid = TimeGrid(len(t), float(t[-1]))
    if not np.allclose(grid.times, t, rtol=0, atol=1e-12 * max(t[-1], 1)):
        raise ProblemFileError("gain.csv times are not a uniform grid",
                               'gains')
    return GainTrajectory(grid, A, Ad)


# ----------------------------------------------------------------- dispatch

def _bounds_record(problem, sol):
    rec = {}
    for label, J in (('own_J', max(float(sol.J_value), 0.0)),
                     ('feasibility_J', None)):
        try:
            b = spectral_bounds(problem, J)
        except AttnSteerError as exc:
            rec[label] = {'available': False, 'reason': str(exc)}
            continue
        rec[label] = {'available': True, 'c': b.c_lower, 'C': b.C_upper,
                      'J_used': b.attention_value_used,
                      'contained': bool(b.contains(sol.path))}
    return rec


def _constant_solution(problem, control, path):
    grid = path.grid
    gains = GainTrajectory.constant(grid, control.A)
    J, Js, Jt = attention_cost(problem, gains, path)
    gap = float(np.linalg.norm(path.sigma[-1] - problem.sigma_fin))
    return FoncSolution(grid, path.sigma, np.zeros_like(path.sigma), gains.A,
                        gains.A_dot, problem.alpha, float(J), Js, Jt, gap, 0,
                        True, {'kind': 'constant'})


def solve_any(problem, cfg, warm_start=None):
    """Route to the solver matching ``problem.alpha``.

    Returns a :class:`FoncSolution`; the constant-gain (``alpha = 0``)
    answer is wrapped with a zero adjoint and ``info['kind']``.
    """
    a = problem.alpha
    if a == 1.0:
        sol = solve_spatial(problem, cfg, warm_start=warm_start)
        sol.info['kind'] = 'spatial'
        return sol
    if a == 0.0:
        tcfg = TemporalConfig(grid_size=cfg.grid_size)
        control, path = solve_temporal_constant(problem, tcfg, warm_start)
        sol = _constant_solution(problem, control, path)
        chk = temporal_fonc_check(control.A, path, problem.T)
        sol.info.update(stationarity_residual=chk['residual'],
                        stationarity_residual_symmetric=chk[
                            'residual_symmetric'],
                        Lambda_T=_tolist(chk['Lambda_T']))
        return sol
    sol = solve_fonc(problem, cfg, warm_start)
    sol.info['kind'] = 'fonc'
    return sol


def _result_doc(problem, sol, status):
    doc = {'status': status, 'alpha': problem.alpha, 'T': problem.T,
           'n': problem.n, 'grid_size': sol.grid.N,
           'J_total': float(sol.J_value), 'J_spatial': float(sol.J_spatial),
           'J_temporal': float(sol.J_temporal),
           'residual': float(sol.residual_norm),
           'newton_iters': int(sol.newton_iters),
           'converged': bool(sol.converged),
           'endpoint_gap': float(np.linalg.norm(sol.sigma[-1]
                                                - problem.sigma_fin)),
           'solver': sol.info.get('kind', 'fonc')}
    extra = {k: v for k, v in sol.info.items() if k != 'kind'}
    if extra:
        doc['info'] = extra
    if doc['solver'] != 'constant':
        res = fonc_residuals(problem, sol)
        doc['fonc_residuals'] = {'max_node': res.max_node(),
                                 'max_mid': res.max_mid(),
                                 'boundary': res.boundary()}
        doc['M_0'] = _tolist(sol.M_0)
        doc['M_T'] = _tolist(sol.M_T)
    doc['bounds'] = _bounds_record(problem, sol)
    return doc


def _emit(out, problem, sol, status, contour_scale):
    out.mkdir(parents=True, exist_ok=True)
    write_trajectories(out, sol.grid, sol.sigma, sol.A, sol.A_dot,
                       contour_scale)
    doc = _result_doc(problem, sol, status)
    _write_json(out / 'result.json', doc)
    return doc


def _solve_or_best(problem, cfg, warm=None):
    try:
        return solve_any(problem, cfg, warm), 'ok'
    except (NoConvergence, InfeasibleWithinBudget) as exc:
        log.error("solver did not converge: %s", exc)
        best = exc.best
        if isinstance(best, FoncSolution):
            return best, 'no_convergence'
        return None, 'no_convergence'


def cmd_solve(args):
    problem, block = load_problem(args.problem)
    if args.alpha is not None:
        problem = _with_alpha(problem, args.alpha)
    cfg = _solver_config(block, args.grid_size)
    out = Path(args.out)
    sol, status = _solve_or_best(problem, cfg)
    if sol is None:
        return EXIT_SOLVER, {'status': status}
    doc = _emit(out, problem, sol, status, args.contour_scale)
    code = EXIT_OK if status == 'ok' else EXIT_SOLVER
    return code, {'status': status, 'J_total': doc['J_total'],
                  'residual': doc['residual']}


def _with_alpha(problem, alpha):
    try:
        return problem.with_alpha(alpha)
    except ValueError as exc:
        raise ProblemFileError(str(exc), 'alpha') from None


def _parse_alphas(text):
    try:
        vals = [float(v) for v in text.replace(' ', '').split(',') if v]
    except ValueError:
        raise ProblemFileError(f"cannot parse alphas {text!r}",
                               'alphas') from None
    if not vals or any(not 0 <= a <= 1 for a in vals):
        raise ProblemFileError("alphas must lie in [0, 1]", 'alphas')
    return vals


def cmd_sweep(args):
    problem, block = load_problem(args.problem)
    cfg = _solver_config(block, args.grid_size)
    if args.alphas is not None:
        alphas = _parse_alphas(args.alphas)
    elif 'alphas' in block:
        alphas = _parse_alphas(','.join(str(a) for a in block['alphas']))
    else:
        alphas = [0.0, 0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 1.0]
    interior = [a for a in alphas if 0 < a < 1]
    try:
        sols = continuation_sweep(problem, cfg, interior or [0.5])
    except SweepAborted as exc:
        log.error("%s", exc)
        return EXIT_SOLVER, {'status': 'anchor_failed'}
    by_alpha = dict(zip(interior, sols))
    done = [s for s in sols if s.converged] or sols
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for a in alphas:
        if 0 < a < 1:
            sol = by_alpha[a]
            status = 'ok' if sol.converged else 'no_convergence'
            p = problem.with_alpha(sol.alpha)
        else:
            # nearest interior solution seeds the limit solver
            warm = min(done, key=lambda s: abs(s.alpha - a))
            p = problem.with_alpha(a)
            sol, status = _solve_or_best(p, cfg, warm)
            if sol is None:
                rows.append([a, np.nan, np.nan, np.nan, np.nan, 0, status, a])
                continue
        _emit(out / f"alpha_{a:.6g}", p, sol, status, args.contour_scale)
        rows.append([a, float(sol.J_value), float(sol.J_spatial),
                     float(sol.J_temporal), float(sol.residual_norm),
                     int(sol.newton_iters), status, float(sol.alpha)])
    _write_csv(out / 'summary.csv',
               ['alpha', 'J_total', 'J_spatial', 'J_temporal', 'residual',
                'newton_iters', 'status', 'alpha_solved'], rows)
    failed = sum(r[6] != 'ok' for r in rows)
    return EXIT_OK, {'status': 'ok', 'alphas': len(rows), 'failed': failed}


def cmd_fisher(args):
    problem, block = load_problem(args.problem)
    if args.alpha is not None:
        problem = _with_alpha(problem, args.alpha)
    if not 0 < args.beta < 1:
        raise ProblemFileError("beta must lie in (0, 1)", 'beta')
    if not 0 < problem.alpha < 1:
        raise ProblemFileError("the bound needs 0 < alpha < 1", 'alpha')
    cfg = _solver_config(block, args.grid_size)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = cfg.grid(problem.T)
    pair = fisher_geodesic(problem.sigma_init, problem.sigma_fin, problem.T,
                           grid)
    n = problem.n
    _write_csv(out / 'fisher.csv', ['t'] + _vech_names('s', n),
               ([grid.times[k]] + list(vech(pair.path.sigma[k]))
                for k in range(grid.N)))
    F_pair = fisher_cost(args.beta, GainTrajectory.constant(grid, pair.A_F),
                         pair.path)
    doc = {'beta': args.beta, 'alpha': problem.alpha,
           'A_F': _tolist(pair.A_F),
           'commutant_dim': pair.commutant_dim,
           'commutant_threshold': pair.commutant_threshold,
           'commutant_basis': [_tolist(X) for X in pair.commutant_basis],
           'F_fisher_pair': F_pair[0]}
    sol, status = _solve_or_best(problem, cfg)
    if sol is not None:
        F, K, J, ok = fisher_bound_check(problem, sol, args.beta)
        c, C = sol.path.eigenvalue_range()
        doc.update(F=F, K=K, J=J, satisfied=ok, c=float(c), C=float(C),
                   solution_status=status)
    _write_json(out / 'bound.json', doc)
    code = EXIT_OK if status == 'ok' else EXIT_SOLVER
    return code, {'status': status, 'commutant_dim': pair.commutant_dim,
                  'satisfied': doc.get('satisfied')}


def cmd_simulate(args):
    problem, block = load_problem(args.problem)
    if args.alpha is not None:
        problem = _with_alpha(problem, args.alpha)
    seed = args.seed if args.seed is not None else int(block.get('seed', 0))
    try:
        sim_cfg = SimConfig(seed=seed, num_paths=args.paths,
                            substeps=args.substeps,
                            num_sample_paths=args.sample_paths)
    except ValueError as exc:
        raise ProblemFileError(str(exc), 'simulation') from None
    status = 'ok'
    if args.gains:
        gains = read_gain_csv(args.gains, problem.n)
    else:
        sol, status = _solve_or_best(problem,
                                     _solver_config(block, args.grid_size))
        if sol is None:
            return EXIT_SOLVER, {'status': status}
        gains = sol.gains
    res = simulate_paths(problem, gains, sim_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n, t = problem.n, gains.grid.times
    _write_csv(out / 'empirical.csv',
               ['t'] + _vech_names('s', n) + ['deviation'],
               ([t[k]] + list(vech(res.empirical[k]))
                + [res.deviation_per_node[k]] for k in range(len(t))))
    _write_csv(out / 'sample_paths.csv',
               ['path', 't'] + [f"x{i + 1}" for i in range(n)],
               ([p, t[k]] + list(res.sample_paths[p, k])
                for p in range(res.sample_paths.shape[0])
                for k in range(len(t))))
    code = EXIT_OK if status == 'ok' else EXIT_SOLVER
    return code, {'status': status, 'deviation': res.deviation,
                  'seed': res.seed, 'paths': res.num_paths}


# --------------------------------------------------------------------- main

def build_parser():
    ap = argparse.ArgumentParser(
        prog='attnsteer',
        description="Attention-weighted covariance steering.")
    ap.add_argument('-v', '--verbose', action='count', default=0)
    sub = ap.add_subparsers(dest='command', required=True)

    def common(p):
        p.add_argument('problem', help="problem JSON file (or a bundled name"
                                       " such as paper_sec8)")
        p.add_argument('--out', default='.', help="output directory")
        p.add_argument('--grid-size', type=int, default=None)
        p.add_argument('--contour-scale', type=float, default=1.0)

    p = sub.add_parser('solve', help="solve at one attention weight")
    common(p)
    p.add_argument('--alpha', type=float, default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser('sweep', help="continuation over several weights")
    common(p)
    p.add_argument('--alphas', default=None,
                   help="comma-separated weights in [0, 1]")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser('fisher', help="Fisher-Rao geodesic and bound check")
    common(p)
    p.add_argument('--alpha', type=float, default=None)
    p.add_argument('--beta', type=float, default=0.5)
    p.set_defaults(func=cmd_fisher)

    p = sub.add_parser('simulate', help="Monte-Carlo validation")
    common(p)
    p.add_argument('--alpha', type=float, default=None)
    p.add_argument('--paths', type=int, default=20000)
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--substeps', type=int, default=4)
    p.add_argument('--sample-paths', type=int, default=32)
    p.add_argument('--gains', default=None,
                   help="gain.csv from a previous solve")
    p.set_defaults(func=cmd_simulate)
    return ap


def _status(command, code, payload):
    line = {'command': command, 'exit_code': code}
    line.update(payload)
    sys.stdout.write(json.dumps(line, sort_keys=True, default=float) + '\n')
    sys.stdout.flush()


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else EXIT_PARSE
        if code:
            _status(None, EXIT_PARSE, {'status': 'bad_arguments'})
            return EXIT_PARSE
        return EXIT_OK
    logging.basicConfig(
        stream=sys.stderr, format='%(levelname)s %(name)s: %(message)s',
        level=logging.WARNING - 10 * min(args.verbose, 2))
    try:
        code, payload = args.func(args)
    except ProblemFileError as exc:
        log.error("%s", exc)
        code, payload = EXIT_PARSE, {'status': 'bad_problem',
                                     'key': exc.key, 'error': str(exc)}
    _status(args.command, code, payload)
    return code


if __name__ == '__main__':
    sys.exit(main())
