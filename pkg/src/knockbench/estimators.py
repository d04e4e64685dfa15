"""Coefficient estimators: Lasso (L1), Causal Dantzig (CD), ICP, permuted Lasso (L1R).

Each estimator takes an observational and an interventional
:class:`~knockbench.dataset.EnvironmentView` over the same predictor genes and
returns coefficients indexed like the views' design columns.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import special

from ._kernels import cd_lasso_path

N_LAMBDA = 100
LAMBDA_MIN_RATIO = 1e-3
LASSO_TOL = 1e-7
CD_MAX_CONDITION = 1e12
ICP_MAX_PREDICTORS = 16


class EstimatorError(RuntimeError):
    """An estimator is undefined on the given data."""


class SingularGramError(EstimatorError):
    """The Causal Dantzig Gram-difference matrix is numerically singular."""


@dataclass(frozen=True)
class CoefficientVector:
    values: np.ndarray
    predictor_genes: tuple
    penalty: float | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or len(values) != len(self.predictor_genes):
            raise ValueError("values must be 1-d and match predictor_genes")
        if not np.all(np.isfinite(values)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "predictor_genes", tuple(int(g) for g in self.predictor_genes))

    @property
    def support(self):
        return np.flatnonzero(self.values)


@dataclass(frozen=True)
class IcpResult:
    maximin: CoefficientVector
    accepted_sets: list
    alpha: float
    pvalues: dict

    @property
    def causal_set(self) -> frozenset:
        """Intersection of the accepted sets (empty when none were accepted)."""
        if not self.accepted_sets:
            return frozenset()
        return frozenset.intersection(*self.accepted_sets)

    @property
    def abstained(self) -> bool:
        return not np.any(self.maximin.values)


def _genes(obs_view, n_cols):
    genes = getattr(obs_view, "predictor_genes", ()) or ()
    return tuple(genes) if len(genes) == n_cols else tuple(range(n_cols))


def _check_pair(obs_view, intv_view):
    if obs_view.design.shape[1] != intv_view.design.shape[1]:
        raise ValueError("views must share predictor columns")


# ---------------------------------------------------------------------------
# Lasso

def lambda_grid(lambda_max, n_lambda=N_LAMBDA, min_ratio=LAMBDA_MIN_RATIO):
    """Geometric penalty grid from ``lambda_max`` down to ``min_ratio * lambda_max``."""
    return lambda_max * np.geomspace(1.0, min_ratio, n_lambda)


def standardize(X, y):
    """Center ``X`` and ``y`` and scale columns of ``X`` to unit (1/n) variance.

    Returns ``(Xs, yc, scale)``; constant columns keep scale 0 and are left
    as zeros in ``Xs``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    Xc = X - X.mean(axis=0)
    scale = np.sqrt(np.mean(Xc * Xc, axis=0))
    tiny = scale <= 1e-12 * np.maximum(1.0, np.abs(X).max(axis=0, initial=0.0))
    scale = np.where(tiny, 0.0, scale)
    Xs = np.zeros_like(Xc)
    ok = ~tiny
    Xs[:, ok] = Xc[:, ok] / scale[ok]
    return np.asfortranarray(Xs), y - y.mean(), scale


def lasso_path(X, y, lambdas=None, stop_nnz=-1):
    """Lasso path on standardized predictors.

    Returns ``(lambdas, coefs_std, scale)`` where ``coefs_std`` has one row per
    computed grid point on the standardized scale. Divide by ``scale`` (where
    nonzero) for original-scale coefficients.
    """
    Xs, yc, scale = standardize(X, y)
    n = Xs.shape[0]
    if lambdas is None:
        lam_max = np.abs(Xs.T @ yc).max(initial=0.0) / n
        if lam_max <= 0.0:
            return np.zeros(1), np.zeros((1, Xs.shape[1])), scale
        lambdas = lambda_grid(lam_max)
    coefs = cd_lasso_path(Xs, yc, lambdas, stop_nnz, LASSO_TOL)
    return np.asarray(lambdas)[:len(coefs)], coefs, scale


def _to_original(coef_std, scale):
    out = np.zeros_like(coef_std)
    ok = scale > 0
    out[ok] = coef_std[ok] / scale[ok]
    return out


def lasso_select_k(X, y, k):
    """Lasso with exactly ``k`` nonzero coefficients where the path allows it.

    Walks the penalty grid from the top and stops at the first point with at
    least ``k`` nonzeros; an overshoot keeps the ``k`` largest standardized
    magnitudes (lowest index wins ties). Returns ``(coef, penalty)`` on the
    original scale.
    """
    X = np.asarray(X, dtype=np.float64)
    if k < 1 or k > X.shape[1]:
        raise ValueError(f"k={k} must lie in [1, {X.shape[1]}]")
    if X.shape[0] < 2:
        raise ValueError("need more than one sample")
    lambdas, coefs, scale = lasso_path(X, y, stop_nnz=k)
    coef_std = coefs[-1].copy()
    nnz = np.count_nonzero(coef_std)
    if nnz > k:
        order = np.lexsort((np.arange(len(coef_std)), -np.abs(coef_std)))
        coef_std[order[k:]] = 0.0
    return _to_original(coef_std, scale), float(lambdas[-1])


def pooled(obs_view, intv_view):
    X = np.vstack([obs_view.design, intv_view.design])
    y = np.concatenate([obs_view.response, intv_view.response])
    return X, y


def fit_lasso_k(obs_view, intv_view, k=4) -> CoefficientVector:
    """L1: Lasso on both environments pooled, ignoring knockout labels."""
    _check_pair(obs_view, intv_view)
    X, y = pooled(obs_view, intv_view)
    coef, lam = lasso_select_k(X, y, k)
    return CoefficientVector(coef, _genes(obs_view, X.shape[1]), penalty=lam)


# ---------------------------------------------------------------------------
# Causal Dantzig

def gram_difference(obs_view, intv_view):
    """``(G1 - G2, h1 - h2)`` with ``Ge = Xe'Xe/ne`` and ``he = Xe'Ye/ne``."""
    X1, y1 = obs_view.design, obs_view.response
    X2, y2 = intv_view.design, intv_view.response
    n1, n2 = X1.shape[0], X2.shape[0]
    G = X1.T @ X1 / n1 - X2.T @ X2 / n2
    h = X1.T @ y1 / n1 - X2.T @ y2 / n2
    return G, h


def fit_causal_dantzig(obs_view, intv_view) -> CoefficientVector:
    """Unregularized Causal Dantzig, ``(G1 - G2)^{-1} (h1 - h2)``.

    Raises :class:`SingularGramError` when the Gram difference has a
    condition number above 1e12 (or is exactly zero).
    """
    _check_pair(obs_view, intv_view)
    if obs_view.n == 0 or intv_view.n == 0:
        raise ValueError("both environments need at least one sample")
    G, h = gram_difference(obs_view, intv_view)
    genes = _genes(obs_view, G.shape[0])
    if G.shape[0] == 0:
        return CoefficientVector(np.zeros(0), genes)
    if not np.any(G) or not np.all(np.isfinite(G)):
        raise SingularGramError("Gram difference is zero")
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > CD_MAX_CONDITION:
        raise SingularGramError(f"Gram difference condition number {cond:.3g}")
    beta = np.linalg.solve(G, h)
    if not np.all(np.isfinite(beta)):
        raise SingularGramError("non-finite solution")
    return CoefficientVector(beta, genes)


# ---------------------------------------------------------------------------
# Invariant Causal Prediction

def _ols(X, y):
    """Least squares with intercept; returns (coef, intercept, residuals, XtX_inv) or None."""
    n = X.shape[0]
    Z = np.column_stack([np.ones(n), X])
    if n <= Z.shape[1]:
        return None
    ZtZ = Z.T @ Z
    if np.linalg.cond(ZtZ) > 1e12:
        return None
    inv = np.linalg.inv(ZtZ)
    theta = inv @ (Z.T @ y)
    resid = y - Z @ theta
    return theta[1:], theta[0], resid, inv


def welch_pvalue(a, b):
    """Two-sided Welch t-test p-value for equal means."""
    na, nb = len(a), len(b)
    va, vb = np.var(a, ddof=1) / na, np.var(b, ddof=1) / nb
    se2 = va + vb
    diff = np.mean(a) - np.mean(b)
    if se2 <= 0.0:
        return 1.0 if diff == 0.0 else 0.0
    t = diff / np.sqrt(se2)
    dof = se2 ** 2 / (va ** 2 / (na - 1) + vb ** 2 / (nb - 1))
    return float(2.0 * special.stdtr(dof, -abs(t)))


def variance_ratio_pvalue(a, b):
    """Two-sided F-test p-value for equal variances."""
    va, vb = np.var(a, ddof=1), np.var(b, ddof=1)
    if va == 0.0 and vb == 0.0:
        return 1.0
    if vb == 0.0 or va == 0.0:
        return 0.0
    cdf = special.fdtr(len(a) - 1, len(b) - 1, va / vb)
    return float(min(1.0, 2.0 * min(cdf, 1.0 - cdf)))


def _coefficient_pvalue(X1, y1, X2, y2):
    """Wald test that the per-environment least-squares slopes coincide."""
    f1, f2 = _ols(X1, y1), _ols(X2, y2)
    if f1 is None or f2 is None:
        return None
    d = f1[0] - f2[0]
    cov = np.zeros((len(d), len(d)))
    for coef, _, resid, inv in (f1, f2):
        dof = len(resid) - len(coef) - 1
        sigma2 = resid @ resid / dof
        cov += sigma2 * inv[1:, 1:]
    try:
        stat = float(d @ np.linalg.solve(cov, d))
    except np.linalg.LinAlgError:
        return None
    if not np.isfinite(stat):
        return None
    return float(special.chdtrc(len(d), stat))


def _test_subset(S, X1, y1, X2, y2, alpha):
    """Invariance test of predictor subset ``S``.

    Returns ``(pvalue, coef, se)``; ``pvalue`` is None when the subset cannot
    be fitted and is then treated as rejected.
    """
    n1 = len(y1)
    X = np.vstack([X1[:, S], X2[:, S]])
    y = np.concatenate([y1, y2])
    if not S:
        resid = y - y.mean()
        coef, se = np.zeros(0), np.zeros(0)
        pvals = []
    else:
        fit = _ols(X, y)
        if fit is None:
            return None, None, None
        coef, _, resid, inv = fit
        sigma2 = resid @ resid / (len(y) - len(S) - 1)
        se = np.sqrt(sigma2 * np.diag(inv)[1:])
        p_coef = _coefficient_pvalue(X1[:, S], y1, X2[:, S], y2)
        if p_coef is None:
            return None, None, None
        pvals = [p_coef]
    r1, r2 = resid[:n1], resid[n1:]
    pvals += [welch_pvalue(r1, r2), variance_ratio_pvalue(r1, r2)]
    pvals = [1.0 if np.isnan(pv) else pv for pv in pvals]
    return min(1.0, len(pvals) * min(pvals)), coef, se


def fit_icp(obs_view, intv_view, alpha=0.05) -> IcpResult:
    """Invariant Causal Prediction over every subset of the predictors.

    Each subset is fitted by pooled least squares (with intercept) and
    rejected when a Bonferroni-combined p-value of three tests falls below
    ``alpha``: Welch t-test on residual means, two-sided F-test on residual
    variances, and a Wald test comparing per-environment slopes. The empty set
    skips the slope test. Subsets that cannot be fitted count as rejected.

    Maximin coefficients are nonzero only on the intersection of accepted sets;
    each is the point closest to zero of the union of the per-set
    ``1 - alpha`` normal intervals.
    """
    _check_pair(obs_view, intv_view)
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    X1, y1 = np.asarray(obs_view.design, float), np.asarray(obs_view.response, float)
    X2, y2 = np.asarray(intv_view.design, float), np.asarray(intv_view.response, float)
    d = X1.shape[1]
    if d > ICP_MAX_PREDICTORS:
        raise ValueError(f"ICP enumerates subsets of at most {ICP_MAX_PREDICTORS} predictors")
    if len(y1) < 2 or len(y2) < 2:
        raise ValueError("ICP needs at least two samples per environment")
    z = special.ndtri(1.0 - alpha / 2.0)

    accepted, pvalues, intervals = [], {}, []
    for size in range(d + 1):
        for S in itertools.combinations(range(d), size):
            pv, coef, se = _test_subset(list(S), X1, y1, X2, y2, alpha)
            pvalues[frozenset(S)] = pv
            if pv is None or pv <= alpha:
                continue
            accepted.append(frozenset(S))
            intervals.append({j: (c - z * s, c + z * s) for j, c, s in zip(S, coef, se)})

    maximin = np.zeros(d)
    if accepted:
        for j in frozenset.intersection(*accepted):
            bounds = [iv[j] for iv in intervals]
            if any(lo <= 0.0 <= hi for lo, hi in bounds):
                continue
            ends = np.array([e for lo_hi in bounds for e in lo_hi])
            maximin[j] = ends[np.argmin(np.abs(ends))]
    return IcpResult(CoefficientVector(maximin, _genes(obs_view, d)), accepted, alpha, pvalues)


# ---------------------------------------------------------------------------
# Permuted Lasso

def fit_l1r(lasso_coeffs: CoefficientVector, rng) -> CoefficientVector:
    """L1R: shuffle the nonzero Lasso coefficients among the selected positions."""
    rng = np.random.default_rng(rng)
    values = lasso_coeffs.values.copy()
    support = np.flatnonzero(values)
    values[support] = rng.permutation(values[support])
    return CoefficientVector(values, lasso_coeffs.predictor_genes, penalty=lasso_coeffs.penalty)


ESTIMATORS = ("L1", "L1R", "CD", "ICP")
