"""Dense OLS with residuals, classical and HC0 covariance, and projections.

Everything is solved through a column-pivoted QR factorization: the
second-stage design can be nearly collinear (the endogenous column and its
normal-scores correction are often correlated above 0.9), and the pivoted
factorization both stabilizes the solve and yields a rank diagnostic that
names the offending column.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr, solve_triangular

from .errors import RankDeficiencyError

# Relative pivot threshold for declaring rank deficiency.
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class DesignMatrix:
    """An n x p design with labelled columns.

    If ``has_intercept`` the first column must be all ones.  Requires
    n > p and finite entries.
    """

    values: np.ndarray
    column_names: tuple[str, ...]
    has_intercept: bool = True

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "column_names", tuple(self.column_names))
        if v.ndim != 2:
            raise ValueError("design matrix must be 2-D")
        n, p = v.shape
        if len(self.column_names) != p:
            raise ValueError("column_names length does not match design width")
        if n <= p:
            raise ValueError(f"need more rows than columns (n={n}, p={p})")
        if not np.all(np.isfinite(v)):
            raise ValueError("design matrix contains non-finite entries")
        if self.has_intercept and not np.all(v[:, 0] == 1.0):
            raise ValueError("has_intercept is set but first column is not all ones")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class OlsFit:
    """Least-squares fit: coefficients, residuals, and covariance estimates.

    ``vcov_classical`` is sigma2_hat * (X'X)^-1 with the usual residual
    variance (RSS / (n - p)); ``vcov_hc0`` is the heteroskedasticity-robust
    sandwich (X'X)^-1 (sum_i x_i x_i' e_i^2) (X'X)^-1.
    """

    coefficients: np.ndarray
    residuals: np.ndarray
    vcov_classical: np.ndarray
    vcov_hc0: np.ndarray
    r_squared: float
    sigma2_hat: float
    column_names: tuple[str, ...]

    def se_classical(self) -> np.ndarray:
        return np.sqrt(np.diag(self.vcov_classical))

    def se_hc0(self) -> np.ndarray:
        return np.sqrt(np.diag(self.vcov_hc0))


def _pivoted_qr_solve(X: np.ndarray, names: tuple[str, ...]):
    """Factor X with column pivoting and return pieces for solving.

    Raises RankDeficiencyError naming the first column whose pivot falls
    below RANK_RTOL relative to the largest pivot.
    """
    Q, R, piv = qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    ref = diag[0] if diag[0] > 0.0 else 0.0
    bad = np.flatnonzero(diag < RANK_RTOL * ref) if ref > 0.0 else np.arange(len(diag))
    if bad.size:
        col = names[piv[bad[0]]] if names else str(piv[bad[0]])
        raise RankDeficiencyError(
            f"design matrix is rank deficient at column {col!r} "
            f"(pivot ratio {diag[bad[0]] / ref if ref > 0 else 0.0:.2e}); "
            "with a normal-scores correction this typically means the "
            "first-stage residuals are too close to Gaussian for the "
            "correction term to be distinguishable from the endogenous "
            "regressor (identification failure)",
            column=col,
        )
    return Q, R, piv


def ols_fit(X: DesignMatrix, y: np.ndarray) -> OlsFit:
    """Least squares of ``y`` on ``X`` via column-pivoted QR.

    Parameters
    ----------
    X : DesignMatrix
        Full-column-rank design (checked; raises RankDeficiencyError).
    y : ndarray, shape (n,)
        Response vector.

    Returns
    -------
    OlsFit
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    V = X.values
    n, p = V.shape
    if y.shape[0] != n:
        raise ValueError("y length does not match design")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite entries")

    Q, R, piv = _pivoted_qr_solve(V, X.column_names)
    beta_perm = solve_triangular(R, Q.T @ y, lower=False)
    beta = np.empty(p)
    beta[piv] = beta_perm

    resid = y - V @ beta
    rss = float(resid @ resid)
    dof = n - p
    sigma2 = rss / dof

    r_inv = solve_triangular(R, np.eye(p), lower=False)
    xtx_inv_perm = r_inv @ r_inv.T
    xtx_inv = np.empty((p, p))
    xtx_inv[np.ix_(piv, piv)] = xtx_inv_perm

    vcov_classical = sigma2 * xtx_inv
    xe = V * resid[:, None]
    vcov_hc0 = xtx_inv @ (xe.T @ xe) @ xtx_inv

    if X.has_intercept:
        tss = float(np.sum((y - y.mean()) ** 2))
    else:
        tss = float(y @ y)
    if tss > 0.0:
        r2 = 1.0 - rss / tss
    else:
        r2 = 1.0 if rss <= 1e-28 else 0.0

    return OlsFit(
        coefficients=beta,
        residuals=resid,
        vcov_classical=vcov_classical,
        vcov_hc0=vcov_hc0,
        r_squared=r2,
        sigma2_hat=sigma2,
        column_names=X.column_names,
    )


def partial_out(A, b: np.ndarray) -> np.ndarray:
    """Residual of ``b`` after projecting onto the columns of ``A``.

    ``A`` may be a DesignMatrix or a plain 2-D array; ``b`` may be a vector
    or a matrix of columns.  Idempotent up to 1e-10.
    """
    if isinstance(A, DesignMatrix):
        V, names = A.values, A.column_names
    else:
        V = np.asarray(A, dtype=np.float64)
        if V.ndim == 1:
            V = V[:, None]
        names = tuple(f"col{i}" for i in range(V.shape[1]))
    b = np.asarray(b, dtype=np.float64)
    Q, R, piv = _pivoted_qr_solve(V, names)
    coef_perm = solve_triangular(R, Q.T @ b, lower=False)
    coef = np.empty_like(coef_perm)
    coef[piv] = coef_perm
    return b - V @ coef
