"""Augmented-OLS endogeneity correction and its comparator estimators.

``fit_npcf`` is the two-step estimator: residualize the endogenous
column(s) on the exogenous design, map the residual ranks through the
inverse normal CDF, and run OLS on the design augmented with those
scores.  ``fit_iv_internal`` is its exact just-identified IV
representation, ``fit_two_scope`` the scores-on-scores comparator, and
``fit_ols`` the uncorrected baseline.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import DataError, IdentificationError, RankDeficiencyError
from .regress import DesignMatrix, OlsFit, ols_fit, partial_out
from .transform import FirstStage, first_stage, normal_scores

__all__ = ["ModelSpec", "ThetaEstimate", "fit_ols", "fit_npcf",
           "fit_iv_internal", "fit_two_scope", "ESTIMATORS", "INTERCEPT"]

INTERCEPT = "const"


@dataclass(frozen=True)
class ModelSpec:
    """Column roles: one outcome, exogenous controls (intercept implied),
    and at least one endogenous regressor.  The three sets are disjoint."""

    outcome: str
    exogenous: tuple[str, ...]
    endogenous: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "exogenous", tuple(self.exogenous))
        object.__setattr__(self, "endogenous", tuple(self.endogenous))
        if len(self.endogenous) < 1:
            raise DataError("need at least one endogenous column")
        roles = [self.outcome, *self.exogenous, *self.endogenous]
        if len(set(roles)) != len(roles):
            raise DataError("outcome/exogenous/endogenous columns overlap")

    @property
    def m(self) -> int:
        return len(self.endogenous)

    @property
    def k(self) -> int:
        """Design width of the exogenous block, intercept included."""
        return 1 + len(self.exogenous)


@dataclass(frozen=True)
class ThetaEstimate:
    """A fitted coefficient vector ordered (intercept, beta, gamma, rho).

    The rho block (one coefficient per endogenous column) is present only
    for estimators that build a correction regressor.  ``vcov`` carries
    whatever covariance ``vcov_source`` says it is; the pairs bootstrap
    replaces both.
    """

    theta: np.ndarray
    names: tuple[str, ...]
    estimator_tag: str
    vcov: np.ndarray | None = None
    vcov_source: str = "none"    # classical | hc0 | bootstrap | asymptotic-oracle | none
    first_stage: FirstStage | None = None
    r_squared: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.names) != self.theta.size:
            raise DataError("coefficient names do not match theta length")
        if self.vcov is not None and self.vcov.shape != (self.theta.size,) * 2:
            raise DataError("vcov shape does not match theta length")

    def coef(self, name: str) -> float:
        return float(self.theta[self.names.index(name)])

    def se(self) -> np.ndarray | None:
        if self.vcov is None:
            return None
        return np.sqrt(np.diag(self.vcov))


def build_design(data: Dataset, spec: ModelSpec):
    """Return (X exogenous design, Z endogenous block, y) for ``spec``."""
    y = data.column(spec.outcome)
    X = DesignMatrix(
        np.column_stack([np.ones(data.n), *(data.column(c) for c in spec.exogenous)]),
        (INTERCEPT, *spec.exogenous),
        has_intercept=True,
    )
    Z = data.matrix(spec.endogenous)
    return X, Z, y


def _names(spec: ModelSpec, with_rho: bool) -> tuple[str, ...]:
    names = [INTERCEPT, *spec.exogenous, *spec.endogenous]
    if with_rho:
        names += [f"rho[{c}]" for c in spec.endogenous]
    return tuple(names)


def fit_ols(data: Dataset, spec: ModelSpec) -> ThetaEstimate:
    """Plain OLS of the outcome on (exogenous, endogenous) — the
    uncorrected baseline.  No rho block."""
    X, Z, y = build_design(data, spec)
    W = DesignMatrix(np.column_stack([X.values, Z]), _names(spec, False))
    fit = ols_fit(W, y)
    return ThetaEstimate(fit.coefficients, W.column_names, "ols",
                         vcov=fit.vcov_classical, vcov_source="classical",
                         r_squared=fit.r_squared,
                         extra={"vcov_hc0": fit.vcov_hc0,
                                "sigma2_hat": fit.sigma2_hat})


def _augmented_fit(X: DesignMatrix, Z: np.ndarray, correction: np.ndarray,
                   y: np.ndarray, names: tuple[str, ...],
                   spec: ModelSpec) -> OlsFit:
    W = DesignMatrix(np.column_stack([X.values, Z, correction]), names)
    try:
        return ols_fit(W, y)
    except RankDeficiencyError as exc:
        # the collinear pair in the identification failure is (endogenous
        # column, its correction); pivoting may flag either one
        suspects = set(spec.endogenous) | {f"rho[{c}]" for c in spec.endogenous}
        if exc.column in suspects:
            raise IdentificationError(
                f"column {exc.column!r} is collinear with the rest of the "
                "augmented design: the first-stage residuals look Gaussian, "
                "and a normal-scores control function is then a linear "
                "function of the endogenous regressor (the model is "
                "unidentified)"
            ) from exc
        raise


def fit_npcf(data: Dataset, spec: ModelSpec) -> ThetaEstimate:
    """Two-step control-function estimator.

    Step 1 residualizes each endogenous column on the exogenous design and
    converts residual ranks to normal scores; step 2 is joint OLS of the
    outcome on (exogenous, endogenous, scores).  Classical covariance is
    attached for the exogeneity t-test; use the pairs bootstrap for
    inference on the other coefficients.
    """
    X, Z, y = build_design(data, spec)
    fs = first_stage(X, Z, spec.endogenous)
    names = _names(spec, True)
    fit = _augmented_fit(X, Z, fs.eta_hat, y, names, spec)
    return ThetaEstimate(fit.coefficients, names, "npcf",
                         vcov=fit.vcov_classical, vcov_source="classical",
                         first_stage=fs, r_squared=fit.r_squared,
                         extra={"vcov_hc0": fit.vcov_hc0,
                                "sigma2_hat": fit.sigma2_hat})


def fit_iv_internal(data: Dataset, spec: ModelSpec) -> ThetaEstimate:
    """Just-identified IV form of :func:`fit_npcf`.

    Every structural regressor (exogenous and endogenous alike) is
    partialled on the normal-scores block to form its own instrument; the
    resulting moment conditions reproduce the augmented-OLS ``beta`` and
    ``gamma`` exactly, and the scores coefficient is recovered from the IV
    residual projection.
    """
    X, Z, y = build_design(data, spec)
    fs = first_stage(X, Z, spec.endogenous)
    A = np.column_stack([X.values, Z])
    Q = partial_out(fs.eta_hat, A)
    qa = Q.T @ A
    try:
        ab = np.linalg.solve(qa, Q.T @ y)
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError(
            "internal-IV moment matrix is singular") from exc
    resid_struct = y - A @ ab
    H = fs.eta_hat
    rho = np.linalg.solve(H.T @ H, H.T @ resid_struct)
    theta = np.concatenate([ab, rho])
    return ThetaEstimate(theta, _names(spec, True), "iv_internal",
                         vcov=None, vcov_source="none", first_stage=fs)


def fit_two_scope(data: Dataset, spec: ModelSpec) -> ThetaEstimate:
    """Scores-on-scores comparator.

    Normal scores are taken of the endogenous column(s) *and* of every
    non-intercept exogenous column; each scored endogenous column is
    regressed on the scored exogenous block (with intercept), and those
    first-step residuals enter the second-step OLS as the correction
    regressors.  Built to capture rank-level dependence between the
    regressors; with a linear exogenous/endogenous relation it is known to
    leave bias behind.
    """
    X, Z, y = build_design(data, spec)
    n = data.n
    sx_cols = [normal_scores(data.column(c)) for c in spec.exogenous]
    SX = DesignMatrix(np.column_stack([np.ones(n), *sx_cols]),
                      (INTERCEPT, *(f"score[{c}]" for c in spec.exogenous)))
    corr = np.empty_like(Z)
    for j in range(Z.shape[1]):
        sz = normal_scores(Z[:, j])
        corr[:, j] = ols_fit(SX, sz).residuals
    names = _names(spec, True)
    fit = _augmented_fit(X, Z, corr, y, names, spec)
    return ThetaEstimate(fit.coefficients, names, "two_scope",
                         vcov=fit.vcov_classical, vcov_source="classical",
                         r_squared=fit.r_squared,
                         extra={"vcov_hc0": fit.vcov_hc0,
                                "sigma2_hat": fit.sigma2_hat,
                                "correction": corr})


# Registry used by the bootstrap, the Monte Carlo runner, and the CLI.
# The Gaussian-copula estimator registers itself on import of copula_mle.
ESTIMATORS: dict[str, object] = {
    "ols": fit_ols,
    "npcf": fit_npcf,
    "iv_internal": fit_iv_internal,
    "two_scope": fit_two_scope,
}
