"""First-stage residualization and the rank / normal-scores construction.

The generated regressor is built in two steps: residualize each endogenous
column on the exogenous design, then map residual ranks through the inverse
normal CDF.  Ranks are rescaled by n + 1 so the empirical CDF never
touches 0 or 1, where the inverse normal diverges.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConstantInputError, DomainError
from .numerics import std_normal_quantile
from .regress import DesignMatrix, ols_fit

__all__ = ["FirstStage", "average_ranks", "ecdf_rescaled", "normal_scores",
           "first_stage"]


@dataclass(frozen=True)
class FirstStage:
    """Per-endogenous-column first-stage output.

    ``delta_hat`` stacks the regression coefficients column by column,
    ``e_hat`` the residuals, ``eta_hat`` their normal scores, and ``ranks``
    the (average) ranks used.  Each residual column is orthogonal to the
    exogenous design; without ties each score column sums to zero exactly.
    """

    delta_hat: np.ndarray   # (k, m)
    e_hat: np.ndarray       # (n, m)
    eta_hat: np.ndarray     # (n, m)
    ranks: np.ndarray       # (n, m); half-integers appear under ties
    endogenous_names: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.e_hat.shape[0]

    @property
    def m(self) -> int:
        return self.e_hat.shape[1]


def average_ranks(v: np.ndarray) -> np.ndarray:
    """1-based ranks with ties resolved by averaging.

    Stable sort, so equal values occupy adjacent positions before their
    ranks are averaged; O(n log n).
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    n = v.size
    order = np.argsort(v, kind="stable")
    ranks = np.empty(n, dtype=np.float64)
    sv = v[order]
    # group boundaries of tied runs in sorted order
    boundaries = np.flatnonzero(np.concatenate(([True], sv[1:] != sv[:-1], [True])))
    for start, stop in zip(boundaries[:-1], boundaries[1:]):
        ranks[order[start:stop]] = 0.5 * (start + stop + 1)  # mean of start+1..stop
    return ranks


def ecdf_rescaled(v: np.ndarray) -> np.ndarray:
    """Rescaled empirical CDF values rank(v_i) / (n + 1), all in (0, 1)."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size < 2:
        raise DomainError("ecdf_rescaled needs n >= 2")
    return average_ranks(v) / (v.size + 1.0)


def normal_scores(v: np.ndarray) -> np.ndarray:
    """Inverse-normal transform of the rescaled ranks of ``v``.

    Invariant under every strictly increasing transformation of ``v``.
    Without ties the output is a permutation of the fixed grid
    ``quantile(i / (n + 1))``, built with exact sign symmetry so the scores
    sum to zero exactly.

    Raises
    ------
    ConstantInputError
        If ``v`` is constant: the ranks carry no information and the
        correction coefficient would be unidentifiable.
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size < 2:
        raise DomainError("normal_scores needs n >= 2")
    if np.all(v == v[0]):
        raise ConstantInputError(
            "normal_scores input is constant; ranks are degenerate")
    ranks = average_ranks(v)
    n = v.size
    if np.all(ranks == np.round(ranks)):  # no ties: use the symmetric grid
        grid = _symmetric_score_grid(n)
        return grid[ranks.astype(np.int64) - 1]
    return std_normal_quantile(ranks / (n + 1.0))


def _symmetric_score_grid(n: int) -> np.ndarray:
    """Grid quantile(i/(n+1)), i = 1..n, with grid[i] = -grid[n-1-i] exactly."""
    half = n // 2
    i = np.arange(1, half + 1, dtype=np.float64)
    lower = std_normal_quantile(i / (n + 1.0))
    grid = np.empty(n, dtype=np.float64)
    grid[:half] = lower
    grid[n - half:] = -lower[::-1]
    if n % 2:
        grid[half] = 0.0
    return grid


def first_stage(X: DesignMatrix, Z: np.ndarray,
                names: tuple[str, ...] | None = None) -> FirstStage:
    """Regress each endogenous column on ``X`` and score the residuals.

    Parameters
    ----------
    X : DesignMatrix
        Exogenous design (typically intercept plus controls).
    Z : ndarray, shape (n, m) or (n,)
        Endogenous column block, m >= 1.
    names : tuple of str, optional
        Labels for the endogenous columns (used in diagnostics).

    Returns
    -------
    FirstStage
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None]
    n, m = Z.shape
    if m < 1:
        raise DomainError("need at least one endogenous column")
    if n != X.n:
        raise DomainError("Z row count does not match design")
    if names is not None and len(names) != m:
        raise DomainError("names length does not match the endogenous block")

    k = X.p
    delta = np.empty((k, m))
    e_hat = np.empty((n, m))
    eta = np.empty((n, m))
    ranks = np.empty((n, m))
    for j in range(m):
        fit = ols_fit(X, Z[:, j])
        scale = max(1.0, float(np.std(Z[:, j])), abs(float(np.mean(Z[:, j]))))
        if float(np.std(fit.residuals)) <= 1e-12 * scale:
            raise ConstantInputError(
                f"first-stage residuals of endogenous column {j} are "
                "numerically zero: the column lies in the span of the "
                "exogenous design, so its ranks are pure noise")
        delta[:, j] = fit.coefficients
        e_hat[:, j] = fit.residuals
        ranks[:, j] = average_ranks(fit.residuals)
        eta[:, j] = normal_scores(fit.residuals)
    if names is None:
        names = tuple(f"z{j}" for j in range(m))
    return FirstStage(delta_hat=delta, e_hat=e_hat, eta_hat=eta, ranks=ranks,
                      endogenous_names=tuple(names))
