"""Plug-in evaluation of the estimator's asymptotic covariance.

The limiting covariance of the two-step estimator depends on three scalar
functionals of the first-stage error distribution:

    c1 = int_0^1 f(F^-1(u)) / phi(Phi^-1(u)) du
    c2 = int_0^1 F^-1(u) * Phi^-1(u) du
    c3 = int_0^1 int_0^1 h(u) h(v) (min(u,v) - uv) du dv,
         h(u) = F^-1(u) / phi(Phi^-1(u))

All three are computed after the substitution u = Phi(t), which removes
the 1/phi singularities at the endpoints; the remaining infinite t-range
is truncated at |t| <= 8.5 (normal mass beyond is < 1e-17).  The double
integral is reduced exactly to a single cumulative integral over the
triangle below the diagonal, evaluated on a doubling composite-Simpson
grid.

These formulas assume a mean-zero first-stage error; distributions are
centered automatically where that matters.  If the error distribution is
Gaussian the scores are a linear function of the error and the moment
matrix is singular: that case raises ``IdentificationError`` carrying the
singular-value margin.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, IdentificationError, QuadratureError
from .numerics import (DistSpec, QuadratureSpec, RngStream, integrate_1d,
                       integrate_1d_report, std_normal_cdf, std_normal_pdf,
                       std_normal_quantile, std_normal_sf)

__all__ = ["AsymptoticConstants", "MomentSet", "SigmaAsymptotic",
           "constants_c", "lemma_b_residual", "sigma_asymptotic"]

# Truncation of the substituted integrals: normal mass beyond is < 1e-17.
T_TRUNC = 8.5


def _quantile_of_normal(F: DistSpec, t: np.ndarray) -> np.ndarray:
    """g(t) = F^-1(Phi(t)), evaluated tail-accurately on both sides."""
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    neg = t <= 0.0
    if np.any(neg):
        out[neg] = F.quantile(std_normal_cdf(t[neg]))
    if np.any(~neg):
        out[~neg] = F.isf(std_normal_sf(t[~neg]))
    return out


def _check_scalar_family(F: DistSpec) -> None:
    if F.family not in ("normal", "gamma", "empirical"):
        raise DomainError(
            f"constants are defined for scalar families, not {F.family!r}")


@dataclass(frozen=True)
class AsymptoticConstants:
    """The three scalar functionals plus the quadrature error report."""

    c1: float
    c2: float
    c3: float
    quadrature_report: dict

    def __post_init__(self):
        if self.c3 < 0.0:
            raise DomainError("c3 is a variance and cannot be negative")


def _c3_simpson(g_of, M: int) -> float:
    """c3 on a fixed grid: 2 * int g(s) (1-Phi(s)) C1(s) ds with
    C1(s) = int_{-T}^{s} g Phi, both by composite Simpson with M panels."""
    edges = np.linspace(-T_TRUNC, T_TRUNC, M + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    h = edges[1] - edges[0]
    ge, gm = g_of(edges), g_of(mids)
    Fe, Fm = std_normal_cdf(edges), std_normal_cdf(mids)
    w_e, w_m = ge * Fe, gm * Fm
    panel = h / 6.0 * (w_e[:-1] + 4.0 * w_m + w_e[1:])
    C1 = np.concatenate([[0.0], np.cumsum(panel)])
    v = 2.0 * ge * std_normal_sf(edges) * C1
    # composite Simpson over the edge grid (M is even)
    return h / 3.0 * (v[0] + v[-1] + 4.0 * np.sum(v[1:-1:2])
                      + 2.0 * np.sum(v[2:-1:2]))


def constants_c(F: DistSpec, spec: QuadratureSpec = QuadratureSpec()) -> AsymptoticConstants:
    """Compute (c1, c2, c3) for a continuous scalar distribution.

    ``c2`` and ``c1`` do not depend on the distribution's location; ``c3``
    does, and the covariance formulas require a centered error, so pass a
    centered spec (``DistSpec.centered_version()``) when that matters.
    """
    _check_scalar_family(F)
    g = lambda t: _quantile_of_normal(F, t)

    c1, e1, _ = integrate_1d_report(lambda t: F.pdf(g(t)), -T_TRUNC, T_TRUNC, spec)
    c2, e2, _ = integrate_1d_report(lambda t: g(t) * t * std_normal_pdf(t),
                                    -T_TRUNC, T_TRUNC, spec)

    M = 2048
    prev = _c3_simpson(g, M)
    c3_err = math.inf
    while M <= 16384:
        M *= 2
        cur = _c3_simpson(g, M)
        c3_err = abs(cur - prev)
        prev = cur
        if c3_err <= max(spec.abs_tol, 1e-12):
            break
    else:
        raise QuadratureError(
            f"c3 grid did not stabilize (last doubling changed it by {c3_err:.2e})")
    report = {"c1_err": float(e1), "c2_err": float(e2),
              "c3_doubling_delta": float(c3_err), "c3_panels": M,
              "t_truncation": T_TRUNC}
    return AsymptoticConstants(c1=float(c1), c2=float(c2),
                               c3=float(max(prev, 0.0)),
                               quadrature_report=report)


def lemma_b_residual(F: DistSpec, spec: QuadratureSpec = QuadratureSpec()) -> float:
    """|LHS - RHS| of the mixed-kernel identity

        int int [F^-1(u)/phi(Phi^-1(u))] [Phi^-1(v)/phi(Phi^-1(v))]
                (min(u,v) - uv) du dv  =  (1/2) int F^-1(u) Phi^-1(u) du.

    The inner v-integral has the closed form (1-Phi(s)) A1(s) +
    Phi(s) A2(s), with A1, A2 antiderivatives of t*Phi(t) and t*(1-Phi(t)),
    so both sides reduce to single quadratures after u = Phi(s).

    Requires int (F^-1)^2 du < infinity, which every supported family with
    a finite variance satisfies.
    """
    _check_scalar_family(F)
    g = lambda t: _quantile_of_normal(F, t)

    def A1(s):
        return 0.5 * ((s * s - 1.0) * std_normal_cdf(s) + s * std_normal_pdf(s))

    a1_top = A1(np.array(T_TRUNC))

    def inner(s):
        a2 = (T_TRUNC ** 2 - s * s) / 2.0 - a1_top + A1(s)
        return std_normal_sf(s) * A1(s) + std_normal_cdf(s) * a2

    lhs = integrate_1d(lambda s: g(s) * inner(s), -T_TRUNC, T_TRUNC, spec)
    rhs = 0.5 * integrate_1d(lambda t: g(t) * t * std_normal_pdf(t),
                             -T_TRUNC, T_TRUNC, spec)
    return abs(lhs - rhs)


@dataclass(frozen=True, eq=False)
class MomentSet:
    """Population moments feeding the covariance blocks.

    ``sigma_x`` and ``mu_x`` describe the centered exogenous regressors
    (covariance and mean of the raw variables; the intercept is excluded
    throughout — the limit theory covers the slope coefficients).  The
    cross moments are E[xx' eps^2], E[e^2 eps^2], E[eta^2 eps^2],
    E[e eta eps^2]; ``source`` records how they were obtained.
    """

    sigma_x: np.ndarray
    mu_x: np.ndarray
    sigma_e2: float
    e_xx_eps2: np.ndarray
    e_e2_eps2: float
    e_eta2_eps2: float
    e_eeta_eps2: float
    source: str = "analytic"

    def __post_init__(self):
        sx = np.atleast_2d(np.asarray(self.sigma_x, dtype=np.float64))
        object.__setattr__(self, "sigma_x", sx)
        object.__setattr__(self, "mu_x",
                           np.atleast_1d(np.asarray(self.mu_x, dtype=np.float64)))
        object.__setattr__(self, "e_xx_eps2",
                           np.atleast_2d(np.asarray(self.e_xx_eps2, dtype=np.float64)))
        if self.sigma_e2 <= 0.0:
            raise DomainError("sigma_e2 must be positive")

    @property
    def k(self) -> int:
        return self.sigma_x.shape[0]

    @classmethod
    def homoskedastic_gaussian(cls, sigma_x, mu_x, sigma_e2: float, c2: float,
                               eps_var: float = 1.0) -> "MomentSet":
        """Closed forms when eps is independent N(0, eps_var):
        E[xx' eps^2] = eps_var * Sigma_x, E[e^2 eps^2] = eps_var * sigma_e2,
        E[eta^2 eps^2] = eps_var, E[e eta eps^2] = eps_var * c2."""
        sx = np.atleast_2d(np.asarray(sigma_x, dtype=np.float64))
        return cls(sigma_x=sx, mu_x=mu_x, sigma_e2=float(sigma_e2),
                   e_xx_eps2=eps_var * sx, e_e2_eps2=eps_var * float(sigma_e2),
                   e_eta2_eps2=eps_var, e_eeta_eps2=eps_var * float(c2),
                   source="analytic-homoskedastic-gaussian")

    @classmethod
    def simulated(cls, stream: RngStream, x_dist: DistSpec, e_dist: DistSpec,
                  eps_sigma_fn=None, n: int = 10 ** 6) -> "MomentSet":
        """Estimate the moments from ``n`` draws (single exogenous slope).

        ``eps_sigma_fn(x, e)`` may supply a conditional standard deviation
        to model heteroskedasticity; default is homoskedastic unit scale.
        """
        from .numerics import sample
        rng = stream.generator()
        x = sample(stream.child(1), x_dist, n)
        e = sample(stream.child(2), e_dist.centered_version(), n)
        sig = np.ones(n) if eps_sigma_fn is None else eps_sigma_fn(x, e)
        eps = rng.standard_normal(n) * sig
        eta = std_normal_quantile(
            np.clip(e_dist.centered_version().cdf(e), 1e-300,
                    float(np.nextafter(1.0, 0.0))))
        xc = x - x.mean()
        eps2 = eps * eps
        return cls(
            sigma_x=np.array([[float(np.mean(xc * xc))]]),
            mu_x=np.array([float(np.mean(x))]),
            sigma_e2=float(np.mean(e * e)),
            e_xx_eps2=np.array([[float(np.mean(xc * xc * eps2))]]),
            e_e2_eps2=float(np.mean(e * e * eps2)),
            e_eta2_eps2=float(np.mean(eta * eta * eps2)),
            e_eeta_eps2=float(np.mean(e * eta * eps2)),
            source=f"simulated(n={n})",
        )


@dataclass(frozen=True, eq=False)
class SigmaAsymptotic:
    """Assembled limit-covariance pieces for the slope coefficients
    (beta without intercept, gamma, rho)."""

    M: np.ndarray
    Omega: np.ndarray
    Sigma: np.ndarray
    schur_margin: float
    constants: AsymptoticConstants

    @property
    def dim(self) -> int:
        return self.M.shape[0]


def sigma_asymptotic(F: DistSpec, delta, rho: float, moments: MomentSet,
                     spec: QuadratureSpec = QuadratureSpec()) -> SigmaAsymptotic:
    """Assemble M, Omega and Sigma = M^-1 Omega M^-1.

    Parameters
    ----------
    F : DistSpec
        First-stage error distribution (centered internally).
    delta : array_like, shape (k,)
        First-stage slope coefficients on the centered exogenous block.
    rho : float
        Coefficient on the scores regressor.
    moments : MomentSet
        Population moments (see :class:`MomentSet`).

    Raises
    ------
    IdentificationError
        If the (z, eta) block of M, after partialling the exogenous block,
        is numerically singular — the Gaussian-error identification
        failure.  The raised error carries ``schur_margin``.
    """
    _check_scalar_family(F)
    delta = np.atleast_1d(np.asarray(delta, dtype=np.float64))
    k = moments.k
    if delta.shape != (k,):
        raise DomainError("delta length does not match moments.sigma_x")

    cons = constants_c(F.centered_version(), spec)
    c1, c2, c3 = cons.c1, cons.c2, cons.c3
    sx = moments.sigma_x
    se2 = moments.sigma_e2

    dim = k + 2
    M = np.zeros((dim, dim))
    M[:k, :k] = sx
    M[:k, k] = sx @ delta
    M[k, :k] = M[:k, k]
    M[k, k] = float(delta @ sx @ delta) + se2
    M[k, k + 1] = c2
    M[k + 1, k] = c2
    M[k + 1, k + 1] = 1.0

    schur = np.array([[se2, c2], [c2, 1.0]])
    margin = float(np.min(np.abs(np.linalg.eigvalsh(schur))))
    if margin <= 1e-6 * max(1.0, se2):
        raise IdentificationError(
            "moment matrix is singular: the error distribution is "
            "(numerically) Gaussian, so the scores regressor is a linear "
            f"function of the endogenous regressor (margin {margin:.2e})",
            schur_margin=margin)

    rho2 = rho * rho
    omega1_mat = moments.e_xx_eps2 + sx * (rho2 * c1 * c1 * se2)
    w1 = moments.e_e2_eps2 + rho2 * c3
    w2 = moments.e_eta2_eps2 + rho2 / 2.0
    w12 = moments.e_eeta_eps2 + rho2 * c2 / 2.0

    Om = np.zeros((dim, dim))
    Om[:k, :k] = omega1_mat
    Om[:k, k] = omega1_mat @ delta
    Om[k, :k] = Om[:k, k]
    Om[k, k] = float(delta @ omega1_mat @ delta) + w1
    Om[k, k + 1] = w12
    Om[k + 1, k] = w12
    Om[k + 1, k + 1] = w2

    Minv_Om = np.linalg.solve(M, Om)
    Sigma = np.linalg.solve(M, Minv_Om.T).T
    Sigma = 0.5 * (Sigma + Sigma.T)
    return SigmaAsymptotic(M=M, Omega=Om, Sigma=Sigma, schur_margin=margin,
                           constants=cons)
