"""Durbin-Wu-Hausman comparison of a pooled fit against the focal-only fit."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass

import numpy as np

from rtci.errors import DimensionError, TestUndefinedError

_EPS = 1e-16
_TINY = sys.float_info.min / sys.float_info.epsilon
_MAX_ITER = 100_000


def _lower_series(a: float, x: float) -> float:
    # P(a, x) = x^a e^-x / Gamma(a+1) * sum_k x^k / ((a+1)...(a+k))
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_cfrac(a: float, x: float) -> float:
    # modified Lentz evaluation of the Legendre continued fraction for Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_gamma_q(a: float, x: float) -> float:
    """Upper regularized incomplete gamma ``Q(a, x)``."""
    if a <= 0:
        raise ValueError("a must be > 0")
    if x < 0:
        raise ValueError("x must be >= 0")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _lower_series(a, x))
    return _upper_cfrac(a, x)


def chi_square_sf(x: float, df: int) -> float:
    """``P(chi2_df > x)``."""
    if isinstance(df, bool) or int(df) != df or df < 1:
        raise ValueError(f"df must be a positive integer, got {df!r}")
    if x < 0:
        raise ValueError("x must be >= 0")
    return regularized_gamma_q(df / 2.0, x / 2.0)


@dataclass(frozen=True)
class HausmanResult:
    statistic: float
    df: int
    p_value: float
    psd_violation: bool
    beta_diff: np.ndarray

    def to_dict(self) -> dict:
        return {
            "H": self.statistic,
            "df": self.df,
            "p_value": self.p_value,
            "psd_violation": self.psd_violation,
            "beta_diff": self.beta_diff.tolist(),
        }


def hausman_test(fit_local, fit_ind, rank_tol: float = 1e-10) -> HausmanResult:
    """Compare the pooled ``fit_local`` with the consistent ``fit_ind``.

    ``H = d' V^+ d`` with ``d = beta_local - beta_ind`` and
    ``V = Var(beta_ind) - Var(beta_local)``. The pseudo-inverse keeps only
    eigenvalues above ``rank_tol * max|eigenvalue|``; their count is the
    degrees of freedom. Negative eigenvalues below ``-tol`` set
    ``psd_violation``.
    """
    b_loc = np.asarray(fit_local.beta, dtype=np.float64)
    b_ind = np.asarray(fit_ind.beta, dtype=np.float64)
    if b_loc.shape != b_ind.shape:
        raise DimensionError(f"coefficient shapes differ: {b_loc.shape} vs {b_ind.shape}")
    names_l = getattr(fit_local, "names", None)
    names_i = getattr(fit_ind, "names", None)
    if names_l is not None and names_i is not None and tuple(names_l) != tuple(names_i):
        raise DimensionError(f"coefficient order differs: {names_l} vs {names_i}")
    v = np.asarray(fit_ind.covariance) - np.asarray(fit_local.covariance)
    v = (v + v.T) / 2
    diff = b_loc - b_ind
    evals, evecs = np.linalg.eigh(v)
    scale = float(np.abs(evals).max()) if evals.size else 0.0
    tol = rank_tol * scale
    pos = evals > tol
    df = int(pos.sum())
    psd_violation = bool(np.any(evals < -tol))
    if not np.any(diff):
        # coinciding estimates: nothing to test, report the trivial outcome
        return HausmanResult(0.0, max(df, diff.size), 1.0, psd_violation, diff)
    if df == 0:
        err = TestUndefinedError(
            "variance difference has no positive eigenvalues; "
            "the test is undefined (more data may help)"
        )
        err.psd_violation = psd_violation
        raise err
    proj = evecs[:, pos].T @ diff
    h = float(np.sum(proj**2 / evals[pos]))
    if h < 0:
        h = 0.0
        psd_violation = True
    return HausmanResult(h, df, chi_square_sf(h, df), psd_violation, diff)
