"""Baseline model, incremental fit indices and the RMSEA interval."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammainc, gammaln

from ..errors import DegenerateBaselineError, NonConvergenceError, NotPositiveDefiniteError

TAIL_MASS = 1e-10


def logdet_pd(a, what="matrix"):
    """log-determinant of a symmetric positive-definite matrix."""
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(f"{what} is not positive definite") from None
    return 2.0 * float(np.log(np.diag(chol)).sum())


def baseline_model(S, n):
    """Independence model: chi-square and df with Sigma_b = diag(S)."""
    S = np.asarray(S, dtype=float)
    p = S.shape[0]
    f_b = float(np.log(np.diag(S)).sum()) - logdet_pd(S, "sample covariance")
    # rounding can leave tiny negatives when S is exactly diagonal
    f_b = max(f_b, 0.0)
    return (n - 1) * f_b, p * (p - 1) // 2


def fit_indices(chi2_m, df_m, chi2_b, df_b, n):
    """CFI, TLI and RMSEA point estimate.

    TLI is left unclamped and can exceed 1 for models fitting better than
    their degrees of freedom predict.
    """
    if df_m <= 0:
        raise ValueError("model df must be positive")
    if df_b <= df_m:
        raise ValueError("baseline df must exceed model df")
    if n <= 1:
        raise ValueError("n must exceed 1")
    if chi2_b <= df_b:
        raise DegenerateBaselineError(
            f"baseline chi-square {chi2_b:.4g} does not exceed its df {df_b}"
        )
    excess_m = max(chi2_m - df_m, 0.0)
    denom = max(chi2_b - df_b, chi2_m - df_m, 0.0)
    cfi = 1.0 - excess_m / denom
    ratio_b = chi2_b / df_b
    tli = (ratio_b - chi2_m / df_m) / (ratio_b - 1.0)
    rmsea = math.sqrt(excess_m / (df_m * (n - 1)))
    return cfi, tli, rmsea


def ncx2_cdf(x, df, nc):
    """Noncentral chi-square CDF as a Poisson(nc/2) mixture of central CDFs.

    Terms are summed outward from the Poisson mode; each side stops once a
    geometric bound on the mass still unsummed drops below ``TAIL_MASS``.
    """
    if x <= 0:
        return 0.0
    if nc < 0:
        raise ValueError("noncentrality must be non-negative")
    half = 0.5 * nc
    if half == 0:
        return float(gammainc(0.5 * df, 0.5 * x))

    def weight(j):
        return math.exp(-half + j * math.log(half) - gammaln(j + 1.0))

    def term(j):
        return weight(j) * float(gammainc(0.5 * df + j, 0.5 * x))

    mode = int(half)
    total = term(mode)
    # upward: w_{j+1}/w_j = half/(j+1) < 1 for j >= mode
    j = mode
    while True:
        j += 1
        total += term(j)
        r = half / (j + 1)
        if r < 1 and weight(j) * r / (1 - r) < TAIL_MASS:
            break
    # downward: w_{j-1}/w_j = j/half <= 1 for j <= mode
    j = mode
    while j > 0:
        j -= 1
        total += term(j)
        r = j / half
        if r < 1 and weight(j) * r / (1 - r) < TAIL_MASS:
            break
    return min(max(total, 0.0), 1.0)


def _solve_nc(chi2, df, target, tol=1e-10, max_iter=500):
    """Noncentrality where ncx2_cdf(chi2; df, nc) == target (0 if none)."""
    if ncx2_cdf(chi2, df, 0.0) <= target:
        return 0.0
    lo, hi = 0.0, max(chi2, 1.0)
    it = 0
    while ncx2_cdf(chi2, df, hi) > target:
        lo, hi = hi, 2.0 * hi
        it += 1
        if it > 200:
            raise NonConvergenceError("could not bracket noncentrality", state=(lo, hi))
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if ncx2_cdf(chi2, df, mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            return 0.5 * (lo + hi)
    raise NonConvergenceError("bisection did not converge", state=(lo, hi))


def rmsea_ci(chi2_m, df_m, n, level=0.90):
    """RMSEA confidence interval by inverting the noncentral chi-square CDF."""
    if df_m <= 0 or n <= 1:
        raise ValueError("need df_m > 0 and n > 1")
    alpha = 1.0 - level
    nc_lo = _solve_nc(chi2_m, df_m, 1.0 - alpha / 2)
    nc_hi = _solve_nc(chi2_m, df_m, alpha / 2)
    scale = df_m * (n - 1)
    return math.sqrt(max(nc_lo, 0.0) / scale), math.sqrt(max(nc_hi, 0.0) / scale)
