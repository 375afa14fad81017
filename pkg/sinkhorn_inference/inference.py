"""
Test statistics, bootstrap tests, power curves and density summaries.

Replicate j of a bootstrap draws from numpy.random.default_rng([*seed, j]),
so a report depends only on (inputs, seed, M) and never on how the
replicates were scheduled across workers.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .asymptotics import asymptotic_law, rho
from .errors import ConvergenceError, InputError
from .measures import (DiscreteMeasure, EmpiricalMeasure, bootstrap_resample,
                       euclidean_barycenter, linear_trend_measure,
                       sample_empirical)
from .sinkhorn import SolverConfig, sinkhorn_divergence, sinkhorn_solve

log = logging.getLogger(__name__)

Seed = Union[int, Sequence[int]]


def seed_key(seed: Seed) -> Tuple[int, ...]:
    """Normalize an int or a sequence of ints to a tuple"""
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(s) for s in seed)


@dataclass(frozen=True)
class TestConfig:
    lam: float
    M: int = 1000
    level: float = 0.05
    seed: Seed = 0
    solver: Optional[SolverConfig] = None
    workers: int = 1

    __test__ = False  # keep pytest from collecting this class

    def __post_init__(self):
        if self.M < 1:
            raise InputError("M must be at least 1")
        if not 0 < self.level < 1:
            raise InputError(f"level must lie in (0, 1), got {self.level}")
        if self.workers < 1:
            raise InputError("workers must be at least 1")
        if self.solver is None:
            object.__setattr__(self, 'solver', SolverConfig(self.lam))
        elif self.solver.lam != self.lam:
            raise InputError("solver regularization differs from test regularization")
        object.__setattr__(self, 'seed', seed_key(self.seed))

    def with_seed(self, *keys):
        return TestConfig(self.lam, self.M, self.level, self.seed + tuple(keys),
                          self.solver, self.workers)


@dataclass(frozen=True)
class TestReport:
    kind: str
    statistic: float
    bootstrap_stats: np.ndarray
    p_value: float
    ci_low: float
    ci_high: float
    converged_fraction: float
    asymptotic_variance: Optional[float]
    lam: float
    level: float
    M: int
    seed: Tuple[int, ...]
    n: int
    m: Optional[int] = None
    config: dict = field(default_factory=dict)

    __test__ = False

    @property
    def rejected(self):
        return self.p_value <= self.level

    def to_dict(self):
        return {
            'kind': self.kind,
            'statistic': self.statistic,
            'p_value': self.p_value,
            'ci_low': self.ci_low,
            'ci_high': self.ci_high,
            'converged_fraction': self.converged_fraction,
            'asymptotic_variance': self.asymptotic_variance,
            'lambda': self.lam,
            'level': self.level,
            'M': self.M,
            'M_effective': int(self.bootstrap_stats.size),
            'seed': list(self.seed),
            'n': self.n,
            'm': self.m,
            'config': self.config,
        }


# Statistics ------------------------------------------------------------------

def one_sample_statistic(a_hat: EmpiricalMeasure, a_ref, C, cfg: SolverConfig, center=None):
    """sqrt(n) (d(a_hat, a_ref) - d(center, a_ref)); center defaults to a_ref"""
    center = a_ref if center is None else center
    d_hat = sinkhorn_divergence(a_hat, a_ref, C, cfg)
    d_center = sinkhorn_divergence(center, a_ref, C, cfg)
    return float(np.sqrt(a_hat.sample_size) * (d_hat - d_center))


def two_sample_statistic(a_hat: EmpiricalMeasure, b_hat: EmpiricalMeasure, a_ref, b_ref, C,
                         cfg: SolverConfig):
    """rho(n, m) (d(a_hat, b_hat) - d(a_ref, b_ref))"""
    scale = rho(a_hat.sample_size, b_hat.sample_size)
    d_hat = sinkhorn_divergence(a_hat, b_hat, C, cfg)
    d_ref = sinkhorn_divergence(a_ref, b_ref, C, cfg)
    return float(scale * (d_hat - d_ref))


def bootstrap_pvalue(observed, replicates):
    """Share of replicates at least as large in magnitude as the observation"""
    replicates = np.asarray(replicates, dtype=float)
    if replicates.size == 0:
        raise InputError("no replicates")
    return float(np.mean(np.abs(replicates) >= abs(observed)))


def run_replicates(fn, count, workers):
    """fn(j) for j < count, in order; a thread pool when workers > 1"""
    if workers <= 1:
        return [fn(j) for j in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))


def _summarize(kind, observed, values, tc: TestConfig, asym_var, n, m=None, config=None):
    values = np.asarray(values, dtype=float)
    kept = values[np.isfinite(values)]
    if kept.size == 0:
        raise ConvergenceError("every bootstrap replicate failed to converge")
    dropped = values.size - kept.size
    if dropped:
        log.warning("dropped %d of %d non-converged bootstrap replicates", dropped, values.size)
    ci_low, ci_high = np.quantile(kept, [tc.level / 2.0, 1.0 - tc.level / 2.0])
    return TestReport(
        kind=kind,
        statistic=float(observed),
        bootstrap_stats=kept,
        p_value=bootstrap_pvalue(observed, kept),
        ci_low=float(ci_low),
        ci_high=float(ci_high),
        converged_fraction=kept.size / values.size,
        asymptotic_variance=asym_var,
        lam=tc.lam,
        level=tc.level,
        M=tc.M,
        seed=tc.seed,
        n=n,
        m=m,
        config=dict(config or {}, solver=tc.solver.to_dict()),
    )


def _solve_or_raise(a, b, C, cfg, what):
    sol = sinkhorn_solve(a, b, C, cfg)
    if not sol.converged:
        raise ConvergenceError(f"solver did not converge for {what}")
    return sol


def _law_variance(sol, a, b=None, gamma=None):
    try:
        return asymptotic_law(sol, a, b, gamma).variance
    except ConvergenceError:
        return None


# Bootstrap tests -------------------------------------------------------------

def bootstrap_test_one(a_hat: EmpiricalMeasure, a_ref, C, tc: TestConfig, center=None):
    """
    One-sample bootstrap test of H0: the sampled measure equals `center`.

    Observed: sqrt(n)(d(a_hat, a_ref) - d(center, a_ref)), center defaults to
    a_ref. Replicates: sqrt(n)(d(a*_j, a_ref) - d(a_hat, a_ref)) with a*_j
    resampled from a_hat.
    """
    cfg = tc.solver
    center = a_ref if center is None else center
    n = a_hat.sample_size
    scale = np.sqrt(n)

    sol_hat = _solve_or_raise(a_hat, a_ref, C, cfg, 'the observed sample')
    sol_center = _solve_or_raise(center, a_ref, C, cfg, 'the centering term')
    d_hat = sol_hat.dual
    observed = scale * (d_hat - sol_center.dual)
    warm = (sol_hat.alpha, sol_hat.beta)

    def replicate(j):
        a_star = bootstrap_resample(a_hat, seed=tc.seed + (j,))
        sol = sinkhorn_solve(a_star, a_ref, C, cfg, warm_start=warm)
        return scale * (sol.dual - d_hat) if sol.converged else np.nan

    values = run_replicates(replicate, tc.M, tc.workers)
    return _summarize('one-sample', observed, values, tc, _law_variance(sol_center, center), n,
                      config={'d_hat': d_hat, 'd_center': sol_center.dual})


def bootstrap_test_two(a_hat: EmpiricalMeasure, b_hat: EmpiricalMeasure, a_ref, b_ref, C,
                       tc: TestConfig):
    """
    Two-sample bootstrap test.

    Observed: rho(n,m)(d(a_hat, b_hat) - d(a_ref, b_ref)). Replicates resample
    both measures: rho(n,m)(d(a*_j, b*_j) - d(a_hat, b_hat)).
    """
    cfg = tc.solver
    n, m = a_hat.sample_size, b_hat.sample_size
    scale = rho(n, m)

    sol_hat = _solve_or_raise(a_hat, b_hat, C, cfg, 'the observed samples')
    sol_ref = _solve_or_raise(a_ref, b_ref, C, cfg, 'the reference term')
    d_hat = sol_hat.dual
    observed = scale * (d_hat - sol_ref.dual)
    warm = (sol_hat.alpha, sol_hat.beta)

    def replicate(j):
        rng = np.random.default_rng(tc.seed + (j,))
        a_star = bootstrap_resample(a_hat, seed=rng)
        b_star = bootstrap_resample(b_hat, seed=rng)
        sol = sinkhorn_solve(a_star, b_star, C, cfg, warm_start=warm)
        return scale * (sol.dual - d_hat) if sol.converged else np.nan

    values = run_replicates(replicate, tc.M, tc.workers)
    gamma = m / (n + m)
    return _summarize('two-sample', observed, values, tc,
                      _law_variance(sol_ref, a_ref, b_ref, gamma), n, m,
                      config={'d_hat': d_hat, 'd_reference': sol_ref.dual, 'gamma': gamma})


# Power -----------------------------------------------------------------------

def power_curve(a: DiscreteMeasure, thetas, lams, n, M, repeats, level, seed, C,
                workers=1, solver_options=None):
    """
    Rejection rate of the one-sample test of a against linear-trend
    alternatives b(theta), centered at d(a, b).

    Repeat r draws its sample from seed (seed, r), shared across every
    (theta, lam) cell.
    """
    if repeats < 1:
        raise InputError("repeats must be at least 1")
    solver_options = solver_options or {}
    base_seed = seed_key(seed)
    samples = [sample_empirical(a, n, seed=base_seed + (r,)) for r in range(repeats)]

    rows = []
    for lam in lams:
        tc = TestConfig(lam, M=M, level=level, seed=base_seed,
                        solver=SolverConfig(lam, **solver_options), workers=workers)
        for theta in thetas:
            b = linear_trend_measure(a.size, theta)
            rejections = 0
            failed = 0
            for r, a_hat in enumerate(samples):
                try:
                    report = bootstrap_test_one(a_hat, b, C, tc.with_seed(r, 1), center=a)
                except ConvergenceError as e:
                    log.warning("repeat %d skipped (theta=%g, lambda=%g): %s", r, theta, lam, e)
                    failed += 1
                    continue
                rejections += int(report.rejected)
            done = repeats - failed
            power = rejections / done if done else float('nan')
            log.info("theta=%g lambda=%g power=%.3f", theta, lam, power)
            rows.append({'theta': float(theta), 'lambda': float(lam), 'power': power,
                         'rejections': rejections, 'repeats': done})
    return rows


# Real-data tables ------------------------------------------------------------

def reference_tests(samples: Mapping[str, EmpiricalMeasure], test_labels, reference_labels, C,
                    tc: TestConfig):
    """One-sample test of each group against the barycenter of the reference groups"""
    reference = euclidean_barycenter([samples[g].measure for g in reference_labels])
    reports = {}
    for k, label in enumerate(test_labels):
        reports[label] = bootstrap_test_one(samples[label], reference, C, tc.with_seed(k))
    return reference, reports


def pairwise_pvalue_table(samples: Mapping[str, EmpiricalMeasure], labels, reference_labels, C,
                          tc: TestConfig):
    """Two-sample p-values for every pair of groups, reference term d(a, a)"""
    reference = euclidean_barycenter([samples[g].measure for g in reference_labels])
    labels = list(labels)
    table = np.ones((len(labels), len(labels)))
    reports = {}
    for i, first in enumerate(labels):
        for j in range(i + 1, len(labels)):
            second = labels[j]
            report = bootstrap_test_two(samples[first], samples[second], reference, reference, C,
                                        tc.with_seed(i, j))
            table[i, j] = table[j, i] = report.p_value
            reports[(first, second)] = report
    return labels, table, reports


# Reporting -------------------------------------------------------------------

def silverman_bandwidth(samples):
    """0.9 min(sd, IQR / 1.34) M^(-1/5)"""
    x = np.asarray(samples, dtype=float)
    sd = np.std(x)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    if spread <= 0:
        spread = sd
    return 0.9 * spread * x.size ** (-0.2)


def kde(samples, eval_points):
    """Gaussian kernel density estimate with Silverman's bandwidth"""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2 or not np.all(np.isfinite(x)) or np.std(x) == 0:
        raise InputError("kde needs at least two finite samples with nonzero variance")
    h = silverman_bandwidth(x)
    estimator = stats.gaussian_kde(x, bw_method=h / np.std(x, ddof=1))
    return estimator(np.asarray(eval_points, dtype=float))


def ks_distance(samples, reference=None, scale=None):
    """
    Kolmogorov-Smirnov distance of samples to N(0, 1) or to a second sample.

    Against N(0, 1) the samples are divided by `scale` when given (mean-zero
    limit laws), otherwise standardized by their own mean and sd.
    """
    x = np.asarray(samples, dtype=float)
    if reference is not None:
        return float(stats.ks_2samp(x, np.asarray(reference, dtype=float)).statistic)
    z = x / scale if scale is not None else (x - x.mean()) / x.std(ddof=1)
    return float(stats.kstest(z, 'norm').statistic)
