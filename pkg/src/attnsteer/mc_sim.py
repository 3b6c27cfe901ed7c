"""Monte-Carlo check of a gain trajectory against the Lyapunov path.

Sample paths of ``dX = A_t X dt + B dW`` with ``X_0 ~ N(0, sigma_init)``
are advanced by Euler-Maruyama.  Every path owns a Philox stream keyed
by ``(seed, path index)``, paths are processed in fixed-size chunks and
chunk sums are reduced in chunk order, so the output does not depend on
how many worker threads were used.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .matfun import spd_sqrt
from .model import CovariancePath, propagate_lyapunov

__all__ = ['SimConfig', 'SimResult', 'simulate_paths', 'thread_count']

CHUNK = 1024


@dataclass(frozen=True)
class SimConfig:
    seed: int
    num_paths: int = 20000
    substeps: int = 4
    num_sample_paths: int = 32
    threads: int = None

    def __post_init__(self):
        if self.num_paths < 100:
            raise ValueError("num_paths must be at least 100")
        if self.substeps < 1:
            raise ValueError("substeps must be at least 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class SimResult:
    empirical: np.ndarray
    reference: CovariancePath
    deviation: float
    deviation_per_node: np.ndarray
    sample_paths: np.ndarray
    seed: int
    num_paths: int
    substeps: int

    @property
    def grid(self):
        return self.reference.grid


def thread_count(config=None):
    """Worker threads: ``config.threads``, else ``ATTNSTEER_THREADS``, else 1."""
    if config is not None and config.threads:
        return max(1, int(config.threads))
    env = os.environ.get('ATTNSTEER_THREADS')
    return max(1, int(env)) if env else 1


def _chunk(problem, gains, cfg, first, count, root):
    grid = gains.grid
    n, m = problem.n, problem.m
    s = cfg.substeps
    steps = (grid.N - 1) * s
    draws = np.empty((count, n + steps * m))
    for j in range(count):
        rng = np.random.Generator(np.random.Philox(key=[cfg.seed, first + j]))
        draws[j] = rng.standard_normal(draws.shape[1])
    x = draws[:, :n] @ root.T
    noise = draws[:, n:].reshape(count, steps, m)
    dt = grid.h / s
    Bt = problem.B.T * np.sqrt(dt)
    A = gains.A
    keep = max(0, min(cfg.num_sample_paths - first, count))
    samples = np.empty((keep, grid.N, n))
    sums = np.empty((grid.N, n, n))
    sums[0] = x.T @ x
    samples[:, 0] = x[:keep]
    w = (np.arange(s) + 0.5) / s
    for k in range(grid.N - 1):
        for i in range(s):
            Am = A[k] + w[i] * (A[k + 1] - A[k])
            x = x + dt * (x @ Am.T) + noise[:, k * s + i] @ Bt
        sums[k + 1] = x.T @ x
        samples[:, k + 1] = x[:keep]
    return sums, samples


def simulate_paths(problem, gains, config):
    """Empirical covariances of the controlled SDE on the gain grid.

    Returns
    -------
    SimResult
        ``deviation = max_t ||Sigma_hat_t - Sigma_t||_F / ||Sigma_t||_F``
        against :func:`attnsteer.model.propagate_lyapunov`.
    """
    cfg = config
    root = spd_sqrt(problem.sigma_init)
    starts = list(range(0, cfg.num_paths, CHUNK))
    job = lambda a: _chunk(problem, gains, cfg, a,
                           min(CHUNK, cfg.num_paths - a), root)
    workers = min(thread_count(cfg), len(starts))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(job, starts))
    else:
        parts = [job(a) for a in starts]
    total = parts[0][0].copy()
    for sums, _ in parts[1:]:
        total += sums
    emp = total / cfg.num_paths
    emp = 0.5 * (emp + emp.swapaxes(-1, -2))
    samples = np.concatenate([p[1] for p in parts], axis=0)
    ref = propagate_lyapunov(problem, gains)
    dev = (np.linalg.norm(emp - ref.sigma, axis=(-2, -1))
           / np.linalg.norm(ref.sigma, axis=(-2, -1)))
    return SimResult(emp, ref, float(dev.max()), dev, samples, int(cfg.seed),
                     cfg.num_paths, cfg.substeps)
