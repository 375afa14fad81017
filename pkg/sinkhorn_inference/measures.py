"""
Finite metric spaces, discrete probability measures on them, cost matrices,
the synthetic generators (uniform, linear trend) and multinomial sampling of
empirical measures.

Support points are always listed in row-major order (last coordinate
fastest); weight vectors are portable across runs because of it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InputError

SUM_TOL = 1e-12


def _frozen(array, dtype=float):
    arr = np.array(array, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


def as_rng(seed):
    """Accept an int, a sequence of ints or a Generator"""
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class FiniteSpace:
    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] < 1:
            raise InputError("a finite space needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise InputError("space coordinates must be finite")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise InputError("space points must be distinct")
        object.__setattr__(self, 'points', _frozen(pts))

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]


@dataclass(frozen=True)
class DiscreteMeasure:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.size < 1:
            raise InputError("a measure needs at least one weight")
        if not np.all(np.isfinite(w)):
            raise InputError("measure weights must be finite")
        if np.any(w < 0):
            raise InputError("measure weights must be nonnegative")
        if abs(w.sum() - 1.0) > SUM_TOL:
            raise InputError(f"measure weights sum to {w.sum():.17g}, not 1")
        object.__setattr__(self, 'weights', _frozen(w))

    @property
    def size(self):
        return self.weights.size

    @property
    def support(self):
        return np.flatnonzero(self.weights > 0)

    def to_dict(self):
        return {'n_points': int(self.size), 'weights': self.weights.tolist()}

    @classmethod
    def from_dict(cls, payload):
        weights = payload['weights']
        if len(weights) != payload.get('n_points', len(weights)):
            raise InputError("n_points does not match the weight vector")
        return cls(weights)


@dataclass(frozen=True)
class CostMatrix:
    entries: np.ndarray
    exponent: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.entries, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise InputError(f"cost matrix must be square, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise InputError("cost entries must be finite")
        if np.any(c < 0):
            raise InputError("cost entries must be nonnegative")
        if self.exponent <= 0:
            raise InputError("cost exponent must be positive")
        object.__setattr__(self, 'entries', _frozen(c))

    @property
    def size(self):
        return self.entries.shape[0]


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Counts of n draws over the support; base is the measure sampled from, if known"""
    counts: np.ndarray
    sample_size: int
    base: Optional[DiscreteMeasure] = None

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or counts.size < 1:
            raise InputError("counts must be a nonempty vector")
        if np.any(counts < 0) or np.any(counts != np.round(counts)):
            raise InputError("counts must be nonnegative integers")
        n = int(self.sample_size)
        if n < 1:
            raise InputError("sample size must be at least 1")
        if int(counts.sum()) != n:
            raise InputError(f"counts sum to {int(counts.sum())}, expected {n}")
        if self.base is not None and self.base.size != counts.size:
            raise InputError("base measure and counts differ in length")
        object.__setattr__(self, 'counts', _frozen(counts, dtype=np.int64))
        object.__setattr__(self, 'sample_size', n)

    @property
    def size(self):
        return self.counts.size

    @property
    def weights(self):
        return self.counts / self.sample_size

    @property
    def measure(self):
        return DiscreteMeasure(self.weights)

    def to_dict(self):
        payload = self.measure.to_dict()
        payload['counts'] = self.counts.tolist()
        payload['sample_size'] = self.sample_size
        return payload

    @classmethod
    def from_dict(cls, payload):
        return cls(payload['counts'], payload['sample_size'])


# Spaces and costs ------------------------------------------------------------

def make_grid(p, d=2):
    """p**d points at integer coordinates (1..p)**d"""
    if p < 1 or d < 1:
        raise InputError("grid side and dimension must be at least 1")
    axes = [range(1, p + 1)] * d
    return FiniteSpace(np.array(list(itertools.product(*axes)), dtype=float))


def make_rect_grid(cols, rows):
    """Integer grid {1..cols} x {1..rows}, second coordinate fastest"""
    if cols < 1 or rows < 1:
        raise InputError("grid must have at least one row and column")
    pts = itertools.product(range(1, cols + 1), range(1, rows + 1))
    return FiniteSpace(np.array(list(pts), dtype=float))


def power_cost(space, exponent):
    """c_ij = ||x_i - x_j||**exponent"""
    if exponent <= 0:
        raise InputError("cost exponent must be positive")
    if exponent == 2:
        entries = cdist(space.points, space.points, 'sqeuclidean')
    else:
        entries = cdist(space.points, space.points, 'euclidean') ** exponent
    return CostMatrix(entries, exponent=float(exponent))


def squared_euclidean_cost(space):
    return power_cost(space, 2)


def cost_from_matrix(entries):
    """Wrap a user-supplied cost matrix"""
    return CostMatrix(entries, exponent=1.0)


# Measures --------------------------------------------------------------------

def uniform_measure(N):
    if N < 1:
        raise InputError("N must be at least 1")
    return DiscreteMeasure(np.full(N, 1.0 / N))


def linear_trend_measure(N, theta):
    """b_i proportional to 1 + theta * i, i = 1..N"""
    if N < 1:
        raise InputError("N must be at least 1")
    if theta < 0:
        raise InputError("slope must be nonnegative")
    idx = np.arange(1, N + 1, dtype=float)
    return DiscreteMeasure((1.0 + theta * idx) / (N + theta * N * (N + 1) / 2.0))


def uniform_on_support(measure):
    """Uniform weights over the cells where measure has mass"""
    mask = measure.weights > 0
    weights = np.where(mask, 1.0, 0.0)
    return DiscreteMeasure(weights / weights.sum())


def euclidean_barycenter(measures: Sequence[DiscreteMeasure]):
    """Entrywise average of a list of measures"""
    if not measures:
        raise InputError("barycenter of an empty list")
    sizes = {m.size for m in measures}
    if len(sizes) != 1:
        raise InputError(f"measures have mismatched sizes {sorted(sizes)}")
    # sort for order independence of the floating-point sum
    stacked = np.sort(np.stack([m.weights for m in measures]), axis=0)
    weights = stacked.sum(axis=0) / len(measures)
    return DiscreteMeasure(weights / weights.sum())


# Sampling --------------------------------------------------------------------

def _multinomial(rng, n, weights):
    # guard against pvals summing to 1 + eps
    p = np.clip(np.asarray(weights, dtype=float), 0.0, None)
    p = p / p.sum()
    return rng.multinomial(n, p)


def sample_empirical(a, n, seed=None):
    """n iid draws from a, as counts"""
    if n < 1:
        raise InputError("sample size must be at least 1")
    rng = as_rng(seed)
    return EmpiricalMeasure(_multinomial(rng, int(n), a.weights), int(n), base=a)


def bootstrap_resample(a_hat, seed=None):
    """n draws from the empirical weights of a_hat"""
    rng = as_rng(seed)
    n = a_hat.sample_size
    return EmpiricalMeasure(_multinomial(rng, n, a_hat.weights), n, base=a_hat.measure)


def measure_from_counts(counts, base=None):
    counts = np.asarray(counts, dtype=np.int64)
    return EmpiricalMeasure(counts, int(counts.sum()), base=base)


def pool_counts(samples: Sequence[EmpiricalMeasure]):
    """Merge several samples over the same support into one"""
    if not samples:
        raise InputError("nothing to pool")
    if len({s.size for s in samples}) != 1:
        raise InputError("samples have mismatched sizes")
    return measure_from_counts(np.sum([s.counts for s in samples], axis=0))
