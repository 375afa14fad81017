"""
Reproducible experiments behind the CLI subcommands.

Every command writes its payload files (CSV/JSON) under spec.out plus a
manifest echoing the resolved spec, the package version and the sha256 of
each payload, so a rerun can be checked byte-for-byte.
"""

from __future__ import annotations

import dataclasses
import logging
import os
from dataclasses import dataclass, field
from datetime import datetime
from typing import List, Optional

import numpy as np

from . import __version__
from .asymptotics import asymptotic_law, rho, sample_limit
from .errors import InputError
from .inference import (TestConfig, bootstrap_test_one, bootstrap_test_two, kde, ks_distance,
                        pairwise_pvalue_table, power_curve, reference_tests, run_replicates)
from .ingest import BinnedDataset, ingest_points
from .io import (file_digest, load_json, write_column_csv, write_json,
                 write_labeled_matrix_csv, write_rows_csv)
from .measures import (euclidean_barycenter, linear_trend_measure, make_grid, pool_counts,
                       sample_empirical, squared_euclidean_cost, uniform_measure,
                       uniform_on_support)
from .sinkhorn import SolverConfig, sinkhorn_solve

log = logging.getLogger(__name__)

MODES = ('H0-one', 'H0-two', 'H1-one', 'H1-two')
REFERENCES = ('barycenter', 'uniform-support')


@dataclass
class ExperimentSpec:
    command: str = ''
    grid: int = 5
    lams: List[float] = field(default_factory=lambda: [1.0])
    n: List[int] = field(default_factory=lambda: [1000])
    m: Optional[List[int]] = None
    # m / (n + m); fills m when m is absent
    gamma: Optional[float] = None
    thetas: List[float] = field(default_factory=lambda: [0.0])
    mode: str = 'H0-one'
    M: int = 1000
    R: int = 100
    level: float = 0.05
    seed: int = 0
    workers: int = 1
    max_iter: int = 100_000
    tol: float = 1e-9
    kde_points: int = 200
    out: str = 'results'
    # real data
    data: Optional[str] = None
    groups: Optional[List[str]] = None
    reference_groups: Optional[List[str]] = None
    group_a: Optional[str] = None
    group_b: Optional[str] = None
    reference: str = 'barycenter'
    # ingestion
    input: Optional[str] = None
    bbox: Optional[List[float]] = None
    grid_rows: int = 18
    grid_cols: int = 27
    group_column: str = 'group'
    x_column: str = 'x'
    y_column: str = 'y'
    by_month: bool = False

    def __post_init__(self):
        if self.grid < 1:
            raise InputError("grid must be at least 1")
        if not self.lams or any(lam <= 0 for lam in self.lams):
            raise InputError("every lambda must be positive")
        if not self.n or any(k < 1 for k in self.n):
            raise InputError("every sample size must be at least 1")
        if self.m is not None and (len(self.m) != len(self.n) or any(k < 1 for k in self.m)):
            raise InputError("m must list one positive size per n")
        if self.gamma is not None:
            self._apply_gamma()
        if any(t < 0 for t in self.thetas):
            raise InputError("slopes must be nonnegative")
        if self.mode not in MODES:
            raise InputError(f"mode must be one of {', '.join(MODES)}")
        if self.reference not in REFERENCES:
            raise InputError(f"reference must be one of {', '.join(REFERENCES)}")
        if self.M < 1 or self.R < 1 or self.workers < 1 or self.kde_points < 2:
            raise InputError("M, R, workers must be positive and kde_points at least 2")
        if not 0 < self.level < 1:
            raise InputError("level must lie in (0, 1)")
        if self.seed < 0:
            raise InputError("seed must be nonnegative")

    def _apply_gamma(self):
        if not 0 < self.gamma < 1:
            raise InputError("gamma must lie in (0, 1)")
        derived = [max(1, round(k * self.gamma / (1 - self.gamma))) for k in self.n]
        if self.m is None:
            self.m = derived
        elif self.m != derived:
            raise InputError(f"m={self.m} does not match gamma={self.gamma:g} for n={self.n}")

    @classmethod
    def resolve(cls, command, spec_file=None, overrides=None):
        """Defaults < JSON spec file < flags"""
        values = {}
        if spec_file:
            values.update(load_json(spec_file))
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        values['command'] = command
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise InputError(f"unknown spec keys: {', '.join(unknown)}")
        return cls(**values)

    def to_dict(self):
        return dataclasses.asdict(self)

    def solver(self, lam):
        return SolverConfig(lam, max_iter=self.max_iter, tol=self.tol)

    def test_config(self, lam, *keys):
        return TestConfig(lam, M=self.M, level=self.level, seed=(self.seed,) + keys,
                          solver=self.solver(lam), workers=self.workers)

    def m_for(self, idx):
        return self.m[idx] if self.m is not None else self.n[idx]


def _tag(value):
    return format(float(value), 'g')


def _path(spec, name):
    return os.path.join(spec.out, name)


def _banner(title):
    print("=" * 60)
    print(title)
    print("=" * 60)


def _done():
    print("\n" + "=" * 60)
    print("Done!")
    print("=" * 60)


def write_manifest(spec, files, results=None):
    """Echo spec, version and payload digests next to the payloads"""
    manifest = {
        'command': spec.command,
        'version': __version__,
        'spec': spec.to_dict(),
        'files': {os.path.relpath(f, spec.out): file_digest(f) for f in files},
        'results': results or {},
        'created_at': datetime.now().isoformat(),
    }
    path = write_json(_path(spec, f"{spec.command}_manifest.json"), manifest)
    log.info("manifest for %s lists %d files", spec.command, len(files))
    print(f"✓ Saved manifest to {path}")
    return manifest


def _kde_grid(spec, *samples):
    values = np.concatenate([np.asarray(s, dtype=float) for s in samples])
    lo, hi = values.min(), values.max()
    pad = 0.25 * (hi - lo) if hi > lo else 1.0
    return np.linspace(lo - pad, hi + pad, spec.kde_points)


def _write_kde(spec, name, samples, grid):
    try:
        density = kde(samples, grid)
    except InputError as e:
        print(f"  ⚠ No density for {name}: {e}")
        return None
    rows = [{'x': x, 'density': d} for x, d in zip(grid, density)]
    return write_rows_csv(_path(spec, name), rows, ['x', 'density'])


def _synthetic_pair(spec):
    space = make_grid(spec.grid)
    C = squared_euclidean_cost(space)
    a = uniform_measure(space.size)
    return C, a, linear_trend_measure(space.size, spec.thetas[0])


# simulate-clt ----------------------------------------------------------------

def cmd_simulate_clt(spec: ExperimentSpec):
    """Monte-Carlo replicates of the scaled statistic next to draws from its limit law"""
    _banner("Simulate CLT: empirical Sinkhorn divergences vs limit laws")
    C, a, b = _synthetic_pair(spec)
    if spec.mode.startswith('H0'):
        b = a
    two_sample = spec.mode.endswith('two')

    files, results = [], {}
    for li, lam in enumerate(spec.lams):
        cfg = spec.solver(lam)
        sol_pop = sinkhorn_solve(a, b, C, cfg)
        d_pop = sol_pop.dual
        for ni, n in enumerate(spec.n):
            m = spec.m_for(ni)
            gamma = m / (n + m)
            law = (asymptotic_law(sol_pop, a, b, gamma) if two_sample
                   else asymptotic_law(sol_pop, a))
            warm = (sol_pop.alpha, sol_pop.beta)

            def replicate(j):
                rng = np.random.default_rng((spec.seed, 0, li, ni, j))
                a_hat = sample_empirical(a, n, seed=rng)
                if two_sample:
                    b_hat = sample_empirical(b, m, seed=rng)
                    sol = sinkhorn_solve(a_hat, b_hat, C, cfg, warm_start=warm)
                    scale = rho(n, m)
                else:
                    sol = sinkhorn_solve(a_hat, b, C, cfg, warm_start=warm)
                    scale = np.sqrt(n)
                return scale * (sol.dual - d_pop) if sol.converged else np.nan

            stats_values = np.asarray(run_replicates(replicate, spec.M, spec.workers))
            kept = stats_values[np.isfinite(stats_values)]
            dropped = stats_values.size - kept.size
            limit = sample_limit(law, spec.M, seed=(spec.seed, 1, li, ni))

            tag = f"n{n}_lambda{_tag(lam)}"
            files.append(write_column_csv(_path(spec, f"clt_{tag}_stats.csv"), kept))
            files.append(write_column_csv(_path(spec, f"clt_{tag}_limit.csv"), limit))
            grid = _kde_grid(spec, kept, limit)
            for name, values in ((f"clt_{tag}_stats_kde.csv", kept),
                                 (f"clt_{tag}_limit_kde.csv", limit)):
                written = _write_kde(spec, name, values, grid)
                if written:
                    files.append(written)

            summary = {
                'n': n, 'm': m if two_sample else None, 'lambda': lam,
                'limit_variance': law.variance,
                'replicate_variance': float(np.var(kept, ddof=1)) if kept.size > 1 else None,
                'dropped': int(dropped),
                'ks_to_limit': (ks_distance(kept, scale=law.std)
                                if law.variance > 0 and kept.size > 1 else None),
            }
            results[tag] = summary
            mark = "⚠" if dropped else "✓"
            print(f"{mark} {tag}: {kept.size} replicates, limit variance {law.variance:.4g}"
                  + (f", dropped {dropped}" if dropped else ""))

    manifest = write_manifest(spec, files, results)
    _done()
    return manifest


# test-one / test-two ---------------------------------------------------------

def _load_dataset(spec):
    if not spec.data:
        raise InputError("this command needs --data (a binned dataset from `ingest`)")
    return BinnedDataset.from_dict(load_json(spec.data))


def _reference_measure(spec, dataset):
    """Barycenter of the reference groups (all groups by default), or uniform on its support"""
    labels = spec.reference_groups or dataset.labels
    bary = euclidean_barycenter([s.measure for s in dataset.select(labels)])
    if spec.reference == 'uniform-support':
        return uniform_on_support(bary)
    return bary


def _write_report(spec, name, report):
    files = [write_json(_path(spec, f"{name}.json"), report.to_dict()),
             write_column_csv(_path(spec, f"{name}_bootstrap.csv"), report.bootstrap_stats)]
    written = _write_kde(spec, f"{name}_bootstrap_kde.csv", report.bootstrap_stats,
                         _kde_grid(spec, report.bootstrap_stats))
    if written:
        files.append(written)
    mark = "⚠" if report.converged_fraction < 1 else "✓"
    print(f"{mark} {name}: statistic {report.statistic:.4g}, p-value {report.p_value:.3f}, "
          f"CI [{report.ci_low:.4g}, {report.ci_high:.4g}]")
    return files


def cmd_test(spec: ExperimentSpec):
    """One- or two-sample bootstrap test on synthetic or binned data"""
    two_sample = spec.command == 'test-two'
    _banner(f"Bootstrap {'two' if two_sample else 'one'}-sample test")

    if spec.data:
        dataset = _load_dataset(spec)
        C = squared_euclidean_cost(dataset.space)
        if two_sample:
            if not (spec.group_a and spec.group_b):
                raise InputError("test-two on data needs --group-a and --group-b")
            a_hat, b_hat = dataset.select([spec.group_a, spec.group_b])
            a_ref = b_ref = _reference_measure(spec, dataset)
        else:
            a_hat = pool_counts(dataset.select(spec.groups or dataset.labels))
            a_ref = _reference_measure(spec, dataset)
        center = a_ref
    else:
        C, a, b = _synthetic_pair(spec)
        a_hat = sample_empirical(a, spec.n[0], seed=(spec.seed, 0))
        if two_sample:
            b_hat = sample_empirical(b, spec.m_for(0), seed=(spec.seed, 1))
            a_ref, b_ref = a, b
        else:
            a_ref, center = b, a

    files, results = [], {}
    for li, lam in enumerate(spec.lams):
        tc = spec.test_config(lam, 2, li)
        if two_sample:
            report = bootstrap_test_two(a_hat, b_hat, a_ref, b_ref, C, tc)
        else:
            report = bootstrap_test_one(a_hat, a_ref, C, tc, center=center)
        name = f"{spec.command.replace('-', '_')}_lambda{_tag(lam)}"
        files.extend(_write_report(spec, name, report))
        results[name] = {'statistic': report.statistic, 'p_value': report.p_value,
                         'rejected': report.rejected}

    manifest = write_manifest(spec, files, results)
    _done()
    return manifest


# power -----------------------------------------------------------------------

def cmd_power(spec: ExperimentSpec):
    """Rejection rate against linear-trend alternatives over a slope grid"""
    _banner("Test power vs slope")
    space = make_grid(spec.grid)
    C = squared_euclidean_cost(space)
    a = uniform_measure(space.size)
    rows = power_curve(a, spec.thetas, spec.lams, spec.n[0], spec.M, spec.R, spec.level,
                       spec.seed, C, workers=spec.workers,
                       solver_options={'max_iter': spec.max_iter, 'tol': spec.tol})
    for row in rows:
        print(f"  theta={row['theta']:g} lambda={row['lambda']:g}: power {row['power']:.3f}")
    path = write_rows_csv(_path(spec, 'power.csv'), rows,
                          ['theta', 'lambda', 'power', 'rejections', 'repeats'])
    print(f"✓ Saved {len(rows)} rows to {path}")
    manifest = write_manifest(spec, [path])
    _done()
    return manifest


# month-table -----------------------------------------------------------------

def cmd_month_table(spec: ExperimentSpec):
    """One-sample tests against the reference barycenter and the pairwise p-value table"""
    _banner("Group comparison tables")
    dataset = _load_dataset(spec)
    C = squared_euclidean_cost(dataset.space)
    if not spec.groups or not spec.reference_groups:
        raise InputError("month-table needs --groups and --reference-groups")
    samples = dict(zip(spec.groups + spec.reference_groups,
                       dataset.select(spec.groups + spec.reference_groups)))

    files, results = [], {}
    for li, lam in enumerate(spec.lams):
        tc = spec.test_config(lam, 3, li)
        _, one_sample = reference_tests(samples, spec.groups, spec.reference_groups, C, tc)
        rows = [{'group': g, 'n': r.n, 'statistic': r.statistic, 'p_value': r.p_value,
                 'ci_low': r.ci_low, 'ci_high': r.ci_high, 'rejected': int(r.rejected)}
                for g, r in one_sample.items()]
        files.append(write_rows_csv(
            _path(spec, f"one_sample_lambda{_tag(lam)}.csv"), rows,
            ['group', 'n', 'statistic', 'p_value', 'ci_low', 'ci_high', 'rejected']))

        labels, table, _ = pairwise_pvalue_table(samples, spec.groups, spec.reference_groups,
                                                 C, spec.test_config(lam, 4, li))
        files.append(write_labeled_matrix_csv(
            _path(spec, f"pvalues_lambda{_tag(lam)}.csv"), labels, table))
        results[_tag(lam)] = {'one_sample': {r['group']: r['p_value'] for r in rows},
                              'pairwise': table.tolist()}
        print(f"✓ lambda={lam:g}: {len(rows)} one-sample tests, "
              f"{len(labels) * (len(labels) - 1) // 2} pairs")

    manifest = write_manifest(spec, files, results)
    _done()
    return manifest


# ingest / barycenter ---------------------------------------------------------

def generate_summary(dataset: BinnedDataset):
    """Per-group record counts"""
    print("\n" + "=" * 60)
    print("Summary Statistics")
    print("=" * 60)
    print(f"Total rows: {dataset.total_rows}")
    print(f"Skipped rows: {dataset.skipped}")
    print("\nBy Group:")
    for label, sample in dataset.groups.items():
        print(f"  {label}: {sample.sample_size} records")


def cmd_ingest(spec: ExperimentSpec):
    """Bin a point CSV into per-group measures"""
    _banner("Ingest point records")
    if not spec.input or not spec.bbox:
        raise InputError("ingest needs --input and --bbox")
    dataset = ingest_points(spec.input, spec.bbox, spec.grid_rows, spec.grid_cols,
                            spec.group_column, spec.x_column, spec.y_column,
                            by_month=spec.by_month, groups=spec.groups)
    path = write_json(_path(spec, 'binned.json'), dataset.to_dict())
    print(f"✓ Saved {len(dataset.groups)} groups to {path}")
    generate_summary(dataset)
    manifest = write_manifest(spec, [path], {'skipped': dataset.skipped,
                                             'total_rows': dataset.total_rows})
    _done()
    return manifest


def cmd_barycenter(spec: ExperimentSpec):
    """Euclidean barycenter of selected groups, optionally its uniform-on-support twin"""
    _banner("Euclidean barycenter")
    dataset = _load_dataset(spec)
    labels = spec.groups or dataset.labels
    bary = euclidean_barycenter([s.measure for s in dataset.select(labels)])
    files = [write_json(_path(spec, 'barycenter.json'), bary.to_dict())]
    print(f"✓ Barycenter of {len(labels)} groups ({int((bary.weights > 0).sum())} occupied cells)")
    if spec.reference == 'uniform-support':
        files.append(write_json(_path(spec, 'uniform_support.json'),
                                uniform_on_support(bary).to_dict()))
        print("✓ Uniform measure over the barycenter support")
    manifest = write_manifest(spec, files)
    _done()
    return manifest


COMMANDS = {
    'simulate-clt': cmd_simulate_clt,
    'test-one': cmd_test,
    'test-two': cmd_test,
    'power': cmd_power,
    'month-table': cmd_month_table,
    'ingest': cmd_ingest,
    'barycenter': cmd_barycenter,
}


def run(spec: ExperimentSpec):
    return COMMANDS[spec.command](spec)
