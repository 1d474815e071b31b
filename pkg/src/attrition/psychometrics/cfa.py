"""Maximum-likelihood confirmatory factor analysis.

The model is Sigma = L Phi L' + diag(theta) with factor variances fixed at 1,
free loadings on the patterned cells, free uniquenesses and all factor
correlations free. The discrepancy

    F = ln|Sigma| - ln|S| + tr(S Sigma^-1) - p

is minimized by Fisher scoring with a backtracking line search and an
active-set treatment of the uniqueness lower bound.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..errors import (
    DegenerateBaselineError,
    HeywoodWarning,
    InsufficientDataError,
    NonConvergenceError,
    NotPositiveDefiniteError,
)
from .fit import baseline_model, fit_indices, logdet_pd, rmsea_ci
from .reliability import SubscaleMap

log = logging.getLogger(__name__)


def model_df(pattern):
    """Degrees of freedom of the correlated-factor model for ``pattern``."""
    pattern = np.asarray(pattern, dtype=bool)
    p, k = pattern.shape
    n_free = int(pattern.sum()) + p + k * (k - 1) // 2
    return p * (p + 1) // 2 - n_free


@dataclass
class CfaConfig:
    tol: float = 1e-6
    max_iter: int = 5000
    uniqueness_floor: float = 1e-4
    start_loading: float = 0.7
    start_uniqueness: float = 0.5


class Parameterization:
    """Maps between the flat parameter vector and (L, Phi, theta)."""

    def __init__(self, pattern):
        self.pattern = np.asarray(pattern, dtype=bool)
        self.p, self.k = self.pattern.shape
        self.load_idx = np.nonzero(self.pattern)
        self.phi_idx = np.tril_indices(self.k, -1)
        self.n_load = len(self.load_idx[0])
        self.n_phi = len(self.phi_idx[0])
        self.n_params = self.n_load + self.p + self.n_phi
        self.theta_slice = slice(self.n_load, self.n_load + self.p)

    def unpack(self, x):
        L = np.zeros((self.p, self.k))
        L[self.load_idx] = x[: self.n_load]
        theta = x[self.theta_slice]
        Phi = np.eye(self.k)
        Phi[self.phi_idx] = x[self.n_load + self.p:]
        Phi.T[self.phi_idx] = x[self.n_load + self.p:]
        return L, Phi, theta

    def pack(self, L, Phi, theta):
        return np.concatenate([L[self.load_idx], theta, Phi[self.phi_idx]])

    def lower_bounds(self, floor):
        lb = np.full(self.n_params, -np.inf)
        lb[self.theta_slice] = floor
        return lb

    def implied(self, x):
        L, Phi, theta = self.unpack(x)
        return L @ Phi @ L.T + np.diag(theta)

    def jacobian(self, x):
        """dSigma/dx as an array of shape (n_params, p, p)."""
        L, Phi, _ = self.unpack(x)
        LPhi = L @ Phi
        D = np.zeros((self.n_params, self.p, self.p))
        for t, (i, j) in enumerate(zip(*self.load_idx)):
            D[t, i, :] += LPhi[:, j]
            D[t, :, i] += LPhi[:, j]
        for i in range(self.p):
            D[self.n_load + i, i, i] = 1.0
        off = self.n_load + self.p
        for t, (a, b) in enumerate(zip(*self.phi_idx)):
            outer = np.outer(L[:, a], L[:, b])
            D[off + t] = outer + outer.T
        return D


def discrepancy(par, x, S, logdet_S=None):
    """ML discrepancy F at parameter vector ``x``; +inf when Sigma is not PD."""
    Sigma = par.implied(x)
    try:
        chol = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        return np.inf
    if logdet_S is None:
        logdet_S = logdet_pd(S)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    inv = np.linalg.inv(Sigma)
    return float(logdet - logdet_S + np.trace(S @ inv) - par.p)


def gradient(par, x, S):
    """Analytic gradient of the discrepancy with respect to ``x``."""
    L, Phi, _ = par.unpack(x)
    inv = np.linalg.inv(par.implied(x))
    G = inv - inv @ S @ inv
    g_load = 2.0 * (G @ L @ Phi)[par.load_idx]
    g_theta = np.diag(G).copy()
    g_phi = 2.0 * (L.T @ G @ L)[par.phi_idx]
    return np.concatenate([g_load, g_theta, g_phi])


def fisher_information(par, x):
    """Expected Hessian tr(Sigma^-1 D_a Sigma^-1 D_b) of the discrepancy."""
    inv = np.linalg.inv(par.implied(x))
    A = np.einsum("ij,ajk->aik", inv, par.jacobian(x))
    return np.einsum("aij,bji->ab", A, A)


def projected_gradient(g, x, lb):
    """Zero the components that push against an active lower bound."""
    pg = g.copy()
    pinned = (x <= lb) & (g > 0)
    pg[pinned] = 0.0
    return pg


@dataclass
class CfaModel:
    pattern: np.ndarray
    loadings: np.ndarray
    factor_cov: np.ndarray
    uniquenesses: np.ndarray
    names: list = field(default_factory=list)

    def implied_cov(self):
        return self.loadings @ self.factor_cov @ self.loadings.T + np.diag(self.uniquenesses)

    def to_dict(self):
        return {
            "factors": list(self.names),
            "loadings": self.loadings.tolist(),
            "factor_cov": self.factor_cov.tolist(),
            "uniquenesses": self.uniquenesses.tolist(),
        }


@dataclass
class CfaFit:
    chi2: float
    df: int
    p_value: float
    cfi: float
    tli: float
    rmsea: float
    rmsea_ci90: tuple
    n: int
    discrepancy: float = 0.0
    grad_max: float = 0.0
    iterations: int = 0
    heywood: list = field(default_factory=list)
    history: list = field(default_factory=list, repr=False)

    @property
    def chi2_df(self):
        return self.chi2 / self.df if self.df > 0 else float("nan")

    def to_dict(self):
        return {
            "chi2": self.chi2,
            "df": self.df,
            "chi2_df": self.chi2_df,
            "p_value": self.p_value,
            "cfi": self.cfi,
            "tli": self.tli,
            "rmsea": self.rmsea,
            "rmsea_ci90": list(self.rmsea_ci90),
            "n": self.n,
            "discrepancy": self.discrepancy,
            "grad_max": self.grad_max,
            "iterations": self.iterations,
            "heywood_items": list(self.heywood),
        }


def _check_cov(S, p):
    S = np.asarray(S, dtype=float)
    if S.shape != (p, p):
        raise ValueError(f"covariance must be {p}x{p}, got {S.shape}")
    if not np.allclose(S, S.T, atol=1e-12 * max(1.0, np.abs(S).max())):
        raise NotPositiveDefiniteError("sample covariance is not symmetric")
    S = 0.5 * (S + S.T)
    logdet_pd(S, "sample covariance")
    return S


def _orient(L, Phi):
    """Flip factors so each loading column sums positive (Sigma unchanged)."""
    signs = np.where(L.sum(axis=0) < 0, -1.0, 1.0)
    return L * signs, Phi * np.outer(signs, signs)


def _minimize(par, S, cfg):
    lb = par.lower_bounds(cfg.uniqueness_floor)
    L0 = np.where(par.pattern, cfg.start_loading, 0.0)
    theta0 = np.maximum(cfg.start_uniqueness * np.diag(S), cfg.uniqueness_floor)
    x = par.pack(L0, np.eye(par.k), theta0)
    logdet_S = logdet_pd(S)
    f = discrepancy(par, x, S, logdet_S)
    if not np.isfinite(f):
        raise NotPositiveDefiniteError("start values give a non-PD implied covariance")
    history = [f]
    for it in range(1, cfg.max_iter + 1):
        g = gradient(par, x, S)
        pg = projected_gradient(g, x, lb)
        if np.abs(pg).max() < cfg.tol:
            return x, f, pg, it - 1, history
        free = ~((x <= lb) & (g > 0))
        H = fisher_information(par, x)[np.ix_(free, free)]
        step = np.zeros_like(x)
        step[free] = -np.linalg.lstsq(H, g[free], rcond=1e-12)[0]
        if g @ step >= 0:
            step = -pg
        accepted = False
        alpha = 1.0
        for _ in range(60):
            trial = np.maximum(x + alpha * step, lb)
            f_trial = discrepancy(par, trial, S, logdet_S)
            _, Phi_t, _ = par.unpack(trial)
            if np.isfinite(f_trial) and f_trial <= f and np.linalg.eigvalsh(Phi_t)[0] > 0:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # no descent possible along this direction; treat as stationary
            return x, f, pg, it, history
        x, f = trial, f_trial
        history.append(f)
    g = gradient(par, x, S)
    pg = projected_gradient(g, x, lb)
    if np.abs(pg).max() < cfg.tol:
        return x, f, pg, cfg.max_iter, history
    raise NonConvergenceError(
        f"CFA did not converge in {cfg.max_iter} iterations "
        f"(max |grad| = {np.abs(pg).max():.3g})",
        state={"x": x, "discrepancy": f, "grad_max": float(np.abs(pg).max())},
    )


def fit_cfa(S, n, smap=None, cfg=None):
    """Fit the correlated-factor CFA to a sample covariance matrix.

    Parameters
    ----------
    S : (p, p) array
        Sample covariance (n-1 denominator) of the raw item scores.
    n : int
        Sample size; the test statistic is ``(n - 1) * F``.
    smap : SubscaleMap, optional
        Item-to-factor assignment; defaults to the 24-item OSLQ layout.
    cfg : CfaConfig, optional

    Returns
    -------
    (CfaModel, CfaFit)
    """
    smap = smap or SubscaleMap.default()
    cfg = cfg or CfaConfig()
    pattern = smap.pattern()
    p = pattern.shape[0]
    S = _check_cov(S, p)
    if n <= 1:
        raise InsufficientDataError(f"sample size {n} too small")
    par = Parameterization(pattern)
    x, f, pg, iters, history = _minimize(par, S, cfg)
    grad_max = float(np.abs(pg).max())
    if grad_max >= cfg.tol:
        raise NonConvergenceError(
            f"line search stalled with max |grad| = {grad_max:.3g}",
            state={"x": x, "discrepancy": f, "grad_max": grad_max},
        )
    L, Phi, theta = par.unpack(x)
    L, Phi = _orient(L, Phi)
    heywood = [int(i) + 1 for i in np.nonzero(theta <= cfg.uniqueness_floor * (1 + 1e-9))[0]]
    if heywood:
        warnings.warn(f"uniquenesses at lower bound for items {heywood}", HeywoodWarning)

    df = model_df(pattern)
    chi2 = (n - 1) * max(f, 0.0)
    p_value = float(stats.chi2.sf(chi2, df)) if df > 0 else float("nan")
    cfi = tli = rmsea = float("nan")
    ci = (float("nan"), float("nan"))
    if df > 0:
        chi2_b, df_b = baseline_model(S, n)
        try:
            cfi, tli, rmsea = fit_indices(chi2, df, chi2_b, df_b, n)
        except DegenerateBaselineError as exc:
            log.warning("incremental indices undefined: %s", exc)
            rmsea = float(np.sqrt(max(chi2 - df, 0.0) / (df * (n - 1))))
        ci = rmsea_ci(chi2, df, n)
    model = CfaModel(pattern, L, Phi, theta.copy(), list(smap.names))
    fit = CfaFit(
        chi2=float(chi2), df=df, p_value=p_value, cfi=float(cfi), tli=float(tli),
        rmsea=float(rmsea), rmsea_ci90=(float(ci[0]), float(ci[1])), n=int(n),
        discrepancy=float(f), grad_max=grad_max, iterations=iters,
        heywood=heywood, history=history,
    )
    return model, fit


def sample_cov(items):
    """Sample covariance (n-1 denominator) of an ``n x p`` item matrix."""
    x = np.asarray(items, dtype=float)
    if x.shape[0] < 2:
        raise InsufficientDataError("need at least 2 rows for a covariance")
    return np.cov(x, rowvar=False, ddof=1)
