"""
Entropically regularized transport between discrete measures.

The solver keeps dual potentials (alpha, beta) as its primary state and
iterates Sinkhorn scalings (u, v) against the absorbed kernel
exp((alpha_i + beta_j - c_ij) / lam). Scalings are folded back into the
potentials whenever |log u| or |log v| grows past the absorption threshold,
and a step that over/underflows is replaced by an exact log-sum-exp update,
so small regularizations never produce inf/nan.

Conventions:
  plan     T_ij = exp((alpha_i + beta_j - c_ij) / lam) on supp(a) x supp(b)
  scalings u = exp(alpha / lam), v = exp(beta / lam), T = diag(u) K diag(v)
  gauge    sum of alpha over supp(a) is 0
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ConvergenceError, InputError
from .io import write_matrix_csv
from .measures import DiscreteMeasure, EmpiricalMeasure

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    lam: float
    max_iter: int = 100_000
    tol: float = 1e-9
    absorb_threshold: float = 50.0

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam <= 0:
            raise InputError(f"regularization must be positive, got {self.lam}")
        if self.max_iter < 1:
            raise InputError("max_iter must be at least 1")
        if not self.tol > 0:
            raise InputError("tol must be positive")
        if not self.absorb_threshold > 0:
            raise InputError("absorb_threshold must be positive")

    def to_dict(self):
        return {
            'lambda': self.lam,
            'max_iter': self.max_iter,
            'tol': self.tol,
            'absorb_threshold': self.absorb_threshold,
        }


@dataclass(frozen=True)
class SinkhornSolution:
    lam: float
    plan: np.ndarray
    log_u: np.ndarray
    log_v: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    primal: float
    dual: float
    iterations: int
    marginal_err: float
    converged: bool

    @property
    def u(self):
        """Scaling vector; zero off supp(a). May overflow for tiny lam, prefer log_u"""
        with np.errstate(over='ignore'):
            return np.exp(self.log_u)

    @property
    def v(self):
        with np.errstate(over='ignore'):
            return np.exp(self.log_v)

    def to_dict(self):
        return {
            'lambda': self.lam,
            'primal': self.primal,
            'dual': self.dual,
            'iterations': self.iterations,
            'marginal_err': self.marginal_err,
            'converged': self.converged,
            'alpha': self.alpha.tolist(),
            'beta': self.beta.tolist(),
        }


def _weights(x):
    if isinstance(x, (DiscreteMeasure, EmpiricalMeasure)):
        return np.asarray(x.weights, dtype=float)
    return DiscreteMeasure(x).weights


def _entries(C):
    return np.asarray(getattr(C, 'entries', C), dtype=float)


def kernel_matrix(C, lam):
    """K = exp(-C / lam)"""
    if not lam > 0:
        raise InputError("regularization must be positive")
    return np.exp(-_entries(C) / lam)


def eval_dual_objective(a, b, alpha, beta, C, lam):
    """alpha.a + beta.b - lam * sum_ij exp((alpha_i + beta_j - c_ij) / lam)"""
    a, b = np.asarray(_weights(a)), np.asarray(_weights(b))
    alpha, beta = np.asarray(alpha, dtype=float), np.asarray(beta, dtype=float)
    c = _entries(C)
    if not (a.size == b.size == alpha.size == beta.size == c.shape[0] == c.shape[1]):
        raise InputError("dimensions of measures, potentials and cost disagree")
    log_mass = logsumexp((alpha[:, None] + beta[None, :] - c) / lam)
    return float(alpha @ a + beta @ b - lam * np.exp(log_mass))


def _soft_min_rows(beta, c, lam):
    """-lam * log sum_j exp((beta_j - c_ij) / lam)"""
    return -lam * logsumexp((beta[None, :] - c) / lam, axis=1)


def _soft_min_cols(alpha, c, lam):
    return -lam * logsumexp((alpha[:, None] - c) / lam, axis=0)


def _absorbed_kernel(alpha, beta, c, lam):
    return np.exp((alpha[:, None] + beta[None, :] - c) / lam)


def sinkhorn_solve(a, b, C, cfg: SolverConfig, warm_start=None):
    """
    Solve min <T,C> - lam h(T) over the transport polytope U(a,b).

    Rows with a_i = 0 and columns with b_j = 0 are left out of the iterations;
    their potentials are filled in afterwards with the soft c-transform of
    the other potential, so alpha and beta always have length N.

    warm_start is an optional (alpha, beta) pair of length-N potentials.
    Non-convergence within cfg.max_iter is reported through
    solution.converged, not raised.
    """
    a, b = _weights(a), _weights(b)
    c_full = _entries(C)
    N = c_full.shape[0]
    if a.size != N or b.size != N or c_full.shape != (N, N):
        raise InputError(f"measures of size {a.size}/{b.size} do not match cost of shape {c_full.shape}")
    if not np.all(np.isfinite(c_full)):
        raise InputError("cost entries must be finite")
    lam = cfg.lam

    rows = np.flatnonzero(a > 0)
    cols = np.flatnonzero(b > 0)
    c = c_full[np.ix_(rows, cols)]
    a_s, b_s = a[rows], b[cols]
    log_a, log_b = np.log(a_s), np.log(b_s)

    if warm_start is not None:
        beta = np.asarray(warm_start[1], dtype=float)[cols].copy()
        if not np.all(np.isfinite(beta)):
            raise InputError("warm start potentials must be finite")
    else:
        beta = np.zeros(cols.size)
    alpha = lam * log_a + _soft_min_rows(beta, c, lam)

    def log_step(alpha, beta):
        beta = lam * log_b + _soft_min_cols(alpha, c, lam)
        alpha = lam * log_a + _soft_min_rows(beta, c, lam)
        return alpha, beta

    K = _absorbed_kernel(alpha, beta, c, lam)
    u = np.ones(rows.size)
    v = np.ones(cols.size)
    Ktu = K.T @ u
    err = np.inf
    absorptions = 0
    it = 0
    for it in range(1, cfg.max_iter + 1):
        with np.errstate(divide='ignore', over='ignore', invalid='ignore'):
            v_new = b_s / Ktu
            u_new = a_s / (K @ v_new)
            Ktu_new = K.T @ u_new
            ok = (np.all(np.isfinite(u_new)) and np.all(np.isfinite(v_new))
                  and np.all(u_new > 0) and np.all(v_new > 0)
                  and np.all(Ktu_new > 0) and np.all(np.isfinite(Ktu_new)))

        if not ok:
            # fold the last good scalings in, then take an exact step
            alpha, beta = log_step(alpha + lam * np.log(u), beta + lam * np.log(v))
            u, v = np.ones(rows.size), np.ones(cols.size)
            K = _absorbed_kernel(alpha, beta, c, lam)
            Ktu = K.T @ u
            absorptions += 1
        else:
            u, v, Ktu = u_new, v_new, Ktu_new
            if (np.max(np.abs(np.log(u))) > cfg.absorb_threshold
                    or np.max(np.abs(np.log(v))) > cfg.absorb_threshold):
                alpha = alpha + lam * np.log(u)
                beta = beta + lam * np.log(v)
                u, v = np.ones(rows.size), np.ones(cols.size)
                K = _absorbed_kernel(alpha, beta, c, lam)
                Ktu = K.T @ u
                absorptions += 1

        # row marginals are exact after the u update; measure the columns
        err = float(np.sum(np.abs(v * Ktu - b_s)))
        if err <= cfg.tol:
            break

    alpha = alpha + lam * np.log(u)
    beta = beta + lam * np.log(v)
    # exact row update so T1 = a to rounding
    alpha = lam * log_a + _soft_min_rows(beta, c, lam)

    shift = alpha.mean()
    alpha, beta = alpha - shift, beta + shift

    log_plan = (alpha[:, None] + beta[None, :] - c) / lam
    plan_s = np.exp(log_plan)
    marginal_err = max(float(np.sum(np.abs(plan_s.sum(axis=1) - a_s))),
                       float(np.sum(np.abs(plan_s.sum(axis=0) - b_s))))
    converged = bool(marginal_err <= cfg.tol)

    primal = float(np.sum(plan_s * c) + lam * np.sum(plan_s * log_plan))
    dual = float(alpha @ a_s + beta @ b_s - lam * np.exp(logsumexp(log_plan)) + lam)

    alpha_full = np.empty(N)
    beta_full = np.empty(N)
    alpha_full[rows] = alpha
    beta_full[cols] = beta
    off_rows = np.setdiff1d(np.arange(N), rows)
    off_cols = np.setdiff1d(np.arange(N), cols)
    if off_rows.size:
        alpha_full[off_rows] = _soft_min_rows(beta, c_full[np.ix_(off_rows, cols)], lam)
    if off_cols.size:
        beta_full[off_cols] = _soft_min_cols(alpha, c_full[np.ix_(rows, off_cols)], lam)

    plan = np.zeros((N, N))
    plan[np.ix_(rows, cols)] = plan_s
    log_u = np.full(N, -np.inf)
    log_v = np.full(N, -np.inf)
    log_u[rows] = alpha / lam
    log_v[cols] = beta / lam

    if not converged:
        log.warning("Sinkhorn did not converge in %d iterations (lambda=%g, marginal error %.3e)",
                    cfg.max_iter, lam, marginal_err)
    log.debug("sinkhorn: lambda=%g iterations=%d absorptions=%d err=%.3e",
              lam, it, absorptions, marginal_err)

    return SinkhornSolution(
        lam=lam,
        plan=plan,
        log_u=log_u,
        log_v=log_v,
        alpha=alpha_full,
        beta=beta_full,
        primal=primal,
        dual=dual,
        iterations=it,
        marginal_err=marginal_err,
        converged=converged,
    )


def sinkhorn_divergence(a, b, C, cfg: SolverConfig, warm_start=None):
    """d_lam(a, b); equal to the primal value p_lam(a, b)"""
    sol = sinkhorn_solve(a, b, C, cfg, warm_start=warm_start)
    if not sol.converged:
        raise ConvergenceError(f"no convergence within {cfg.max_iter} iterations "
                               f"(marginal error {sol.marginal_err:.3e})")
    return sol.dual


def sinkhorn_loss(a, b, C, cfg: SolverConfig):
    """2 d(a,b) - d(a,a) - d(b,b); zero when a == b"""
    return (2.0 * sinkhorn_divergence(a, b, C, cfg)
            - sinkhorn_divergence(a, a, C, cfg)
            - sinkhorn_divergence(b, b, C, cfg))


def export_plan_csv(sol: SinkhornSolution, filepath):
    """Dense plan, row i = source point i"""
    return write_matrix_csv(filepath, sol.plan)
