"""
Gaussian limit laws for empirical Sinkhorn divergences.

The limits are mean-zero normals whose variance is a quadratic form of the
dual potentials (lam * log u, lam * log v) in the multinomial covariance of
the sampled measures. Only the scalar laws are built; the N-dimensional
Gaussian vectors are never sampled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from .errors import ConvergenceError, InputError
from .measures import as_rng
from .sinkhorn import SinkhornSolution, _weights

ONE_SAMPLE = 'one-sample'
TWO_SAMPLE = 'two-sample'

TANGENT_TOL = 1e-10


def multinomial_covariance(a):
    """diag(a) - a a^T"""
    w = _weights(a)
    return np.diag(w) - np.outer(w, w)


def rho(n, m):
    """Two-sample scaling sqrt(n m / (n + m))"""
    if n < 1 or m < 1:
        raise InputError("sample sizes must be at least 1")
    return float(np.sqrt(n * m / (n + m)))


def _check_tangent(h, N, name):
    h = np.asarray(h, dtype=float)
    if h.shape != (N,):
        raise InputError(f"{name} must have length {N}")
    if abs(h.sum()) > TANGENT_TOL * max(1.0, np.abs(h).sum()):
        raise InputError(f"{name} must sum to zero (sum = {h.sum():.3e})")
    return h


def directional_derivative(sol: SinkhornSolution, h1, h2):
    """<alpha0, h1> + <beta0, h2> for directions tangent to the simplex"""
    N = sol.alpha.size
    h1 = _check_tangent(h1, N, 'h1')
    h2 = _check_tangent(h2, N, 'h2')
    return float(sol.alpha @ h1 + sol.beta @ h2)


def _on_support(log_w, lam):
    # lam * log u with zeros where the measure has no mass
    out = np.zeros_like(log_w)
    finite = np.isfinite(log_w)
    out[finite] = lam * log_w[finite]
    return out


def _quadratic(weight, a):
    return float(weight @ multinomial_covariance(a) @ weight)


@dataclass(frozen=True)
class AsymptoticLaw:
    kind: str
    variance: float
    weight_a: np.ndarray
    weight_b: Optional[np.ndarray] = None
    gamma: Optional[float] = None
    null_hypothesis: bool = False

    @property
    def std(self):
        return float(np.sqrt(self.variance))

    def to_dict(self):
        return {'kind': self.kind, 'variance': self.variance, 'gamma': self.gamma}


def asymptotic_law(sol: SinkhornSolution, a, b=None, gamma=None, lam=None):
    """
    Limit law of the centered, scaled empirical divergence.

    one-sample: lam^2 log(u)' S(a) log(u)
    two-sample: gamma lam^2 log(u)' S(a) log(u) + (1-gamma) lam^2 log(v)' S(b) log(v)

    The two-sample form is the variance of an independent sum
    sqrt(gamma) <G, lam log u> + sqrt(1-gamma) <H, lam log v>.
    """
    if not sol.converged:
        raise ConvergenceError("asymptotic law needs a converged solution")
    lam = sol.lam if lam is None else lam
    wa = _weights(a)
    weight_a = _on_support(sol.log_u, lam)
    var_a = max(_quadratic(weight_a, wa), 0.0)

    if b is None:
        if gamma is not None:
            raise InputError("gamma only applies to the two-sample law")
        return AsymptoticLaw(kind=ONE_SAMPLE, variance=var_a, weight_a=weight_a)

    if gamma is None or not 0 < gamma < 1:
        raise InputError(f"two-sample law needs gamma in (0, 1), got {gamma}")
    wb = _weights(b)
    weight_b = _on_support(sol.log_v, lam)
    var_b = max(_quadratic(weight_b, wb), 0.0)
    return AsymptoticLaw(
        kind=TWO_SAMPLE,
        variance=gamma * var_a + (1.0 - gamma) * var_b,
        weight_a=weight_a,
        weight_b=weight_b,
        gamma=float(gamma),
        null_hypothesis=bool(np.array_equal(wa, wb)),
    )


def sample_limit(law: AsymptoticLaw, count, seed=None):
    """count iid draws from N(0, law.variance)"""
    rng = as_rng(seed)
    return rng.standard_normal(int(count)) * law.std


def limit_density(law: AsymptoticLaw, x):
    x = np.asarray(x, dtype=float)
    if law.variance == 0:
        raise InputError("degenerate law has no density")
    return stats.norm.pdf(x, loc=0.0, scale=law.std)


def linearization_residual(sol: SinkhornSolution, d_pop, a, a_hat, d_hat, b=None, b_hat=None):
    """
    Scaled remainder of the first-order expansion of d_lam at (a, b).

    d_pop = d(a, b), d_hat = d(a_hat, b) (one sample) or d(a_hat, b_hat).
    The remainder vanishes in probability as the sample sizes grow.
    """
    n = a_hat.sample_size
    delta_a = a_hat.weights - _weights(a)
    first_order = float(sol.alpha @ delta_a)
    scale = np.sqrt(n)
    if b_hat is not None:
        delta_b = b_hat.weights - _weights(b)
        first_order += float(sol.beta @ delta_b)
        scale = rho(n, b_hat.sample_size)
    return float(scale * abs(d_hat - d_pop - first_order))
