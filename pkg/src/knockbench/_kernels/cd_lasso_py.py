"""Pure numpy coordinate-descent Lasso path (fallback backend).

Mirrors ``_cd_lasso.pyx`` step for step so that both backends visit
coordinates in the same order and stop on the same criterion.
"""

import numpy as np


def _soft(z, lam):
    if z > lam:
        return z - lam
    if z < -lam:
        return z + lam
    return 0.0


def cd_lasso_path(X, y, lambdas, stop_nnz=-1, tol=1e-7, max_sweeps=100_000):
    """Solve ``min (1/2n)||y - Xb||^2 + lam*||b||_1`` along ``lambdas``.

    Parameters
    ----------
    X : ndarray, shape (n, p)
        Design; Fortran order is fastest.
    y : ndarray, shape (n,)
    lambdas : ndarray
        Decreasing penalty grid. Solutions are warm-started.
    stop_nnz : int
        Stop after the first grid point with at least this many nonzero
        coefficients. ``-1`` computes the full path.
    tol : float
        Active-set sweeps stop when the largest coefficient change is
        below ``tol``.

    Returns
    -------
    coefs : ndarray, shape (m, p)
        Solutions for the first ``m <= len(lambdas)`` grid points.
    """
    X = np.asfortranarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    lambdas = np.asarray(lambdas, dtype=np.float64)
    n, p = X.shape
    col_sq = np.einsum("ij,ij->j", X, X) / n
    b = np.zeros(p)
    r = y.copy()
    in_active = np.zeros(p, dtype=bool)
    active = []
    out = np.zeros((len(lambdas), p))
    computed = 0
    sweeps = 0

    for li, lam in enumerate(lambdas):
        while True:
            while active:
                max_delta = 0.0
                for j in active:
                    xj = X[:, j]
                    old = b[j]
                    z = xj @ r / n + col_sq[j] * old
                    new = _soft(z, lam) / col_sq[j]
                    delta = new - old
                    if delta != 0.0:
                        r -= delta * xj
                        b[j] = new
                        if abs(delta) > max_delta:
                            max_delta = abs(delta)
                sweeps += 1
                if max_delta < tol or sweeps >= max_sweeps:
                    break
            grad = np.abs(X.T @ r) / n
            viol = np.flatnonzero((grad > lam * (1.0 + 1e-12)) & ~in_active & (col_sq > 0))
            if viol.size == 0 or sweeps >= max_sweeps:
                break
            in_active[viol] = True
            active = np.flatnonzero(in_active).tolist()
        out[li] = b
        computed = li + 1
        if stop_nnz > 0 and np.count_nonzero(b) >= stop_nnz:
            break
    return out[:computed]
