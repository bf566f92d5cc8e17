"""Synthetic data generators and the Monte Carlo harness.

Two designs are built in.  In the first, the endogenous regressor is a
linear function of an exogenous gamma variate plus a gamma error whose
normal score enters the outcome error; the regressor is standardized to
unit variance (population scale), which is the convention the reference
bias/size grid was produced under.  In the second, dependence between the
regressors and the endogeneity itself both arrive through a Gaussian
copula on a trivariate normal, and the endogenous regressor is the
transformed error itself.
"""
from __future__ import annotations

import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import DataError, DomainError, EndofixError
from .estimators import ESTIMATORS, ModelSpec
from .inference import pairs_bootstrap
from .numerics import DistSpec, RngStream, std_normal_cdf, std_normal_quantile

__all__ = ["DgpConfig", "gen_dgp1", "gen_dgp2", "mc_run", "McSummary",
           "MODEL_SPEC"]

MODEL_SPEC = ModelSpec(outcome="y", exogenous=("x",), endogenous=("z",))

# 97.5% standard normal quantile, for 5%-level two-sided tests.
_Z975 = 1.959963984540054

# stable stream keys: (rep, role) — estimator roles must not depend on the
# evaluation order, so summaries are invariant to reordering estimators.
_DATA_KEY = 0xDA7A
_EST_KEYS = {"ols": 1, "npcf": 2, "iv_internal": 3, "two_scope": 4,
             "gp_copula": 5}


def _est_key(tag: str) -> int:
    # later-registered estimators get a key from their name, run-stable
    return _EST_KEYS.get(tag, 0x10000 + zlib.crc32(tag.encode()))

# probabilities fed to quantile/score transforms stay strictly inside (0,1)
_PCLIP_LO = 1e-300
_PCLIP_HI = float(np.nextafter(1.0, 0.0))


@dataclass(frozen=True)
class DgpConfig:
    """Configuration of one simulated design.

    ``kind`` is "dgp1" or "dgp2"; ``e_dist`` must be a gamma family spec.
    ``delta`` is the linear regressor coupling (design 1), ``alpha`` the
    copula correlation between the regressors (design 2), ``rho`` the
    endogeneity strength.  Coefficient defaults (1, -1, 1).
    """

    kind: str
    n: int = 250
    e_dist: DistSpec = field(default_factory=lambda: DistSpec.gamma(1.0, 1.0))
    delta: float = 0.0
    alpha: float = 0.0
    rho: float = 0.0
    beta0: float = 1.0
    beta1: float = -1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("dgp1", "dgp2"):
            raise DomainError(f"unknown DGP kind {self.kind!r}")
        if self.e_dist.family != "gamma":
            raise DomainError("e_dist must be a gamma DistSpec")
        if self.n < 10:
            raise DomainError("n is too small to be useful")
        if self.kind == "dgp2":
            if not (abs(self.alpha) < 1.0 and abs(self.rho) < 1.0):
                raise DomainError("dgp2 needs |alpha| < 1 and |rho| < 1")
            try:
                np.linalg.cholesky(self.correlation_matrix())
            except np.linalg.LinAlgError:
                raise DomainError(
                    f"dgp2 correlation matrix (alpha={self.alpha}, "
                    f"rho={self.rho}) is not positive definite") from None

    def correlation_matrix(self) -> np.ndarray:
        """Trivariate correlation of (e*, x*, u) for the copula design."""
        a, r = self.alpha, self.rho
        return np.array([[1.0, a, r], [a, 1.0, 0.0], [r, 0.0, 1.0]])

    def truth(self) -> dict[str, float]:
        return {"const": self.beta0, "x": self.beta1, "z": self.gamma,
                "rho[z]": self.rho}


def _clip_prob(u: np.ndarray) -> np.ndarray:
    return np.clip(u, _PCLIP_LO, _PCLIP_HI)


def gen_dgp1(cfg: DgpConfig, stream: RngStream) -> Dataset:
    """Linear-coupling design.

    x ~ Gamma(1, 1) and e ~ ``cfg.e_dist`` independently; the raw
    endogenous regressor delta*x + e is divided by its population standard
    deviation; the outcome error is rho * eta + eps with eps standard
    normal and eta the exact normal score of e under its true gamma CDF.
    The true scores are kept in the ``eta_true`` column (and the raw error
    in ``e_true``) for oracle tests.
    """
    if cfg.kind != "dgp1":
        raise DomainError("config is not a dgp1 configuration")
    a, b = cfg.e_dist.params
    rng = stream.generator()
    x = rng.gamma(1.0, 1.0, cfg.n)
    e = rng.gamma(a, 1.0 / b, cfg.n)
    eps = rng.standard_normal(cfg.n)

    from .numerics import gamma_cdf  # local import keeps module load cheap
    eta = std_normal_quantile(_clip_prob(gamma_cdf(a, b, e)))
    sd_z = math.sqrt(cfg.delta ** 2 * 1.0 + a / (b * b))
    z = (cfg.delta * x + e) / sd_z
    u = cfg.rho * eta + eps
    y = cfg.beta0 + cfg.beta1 * x + cfg.gamma * z + u
    return Dataset(
        {"y": y, "x": x, "z": z, "eta_true": eta, "e_true": e},
        provenance=f"dgp1(n={cfg.n}, e~Gamma{cfg.e_dist.params}, "
                   f"delta={cfg.delta}, rho={cfg.rho})")


def gen_dgp2(cfg: DgpConfig, stream: RngStream) -> Dataset:
    """Copula design.

    (e*, x*, u) is trivariate normal with unit variances, corr(e*, x*) =
    alpha, corr(e*, u) = rho, corr(x*, u) = 0.  The regressors are the
    gamma quantile transforms of the normal scores; the endogenous
    regressor is the transformed error itself (no linear coupling), so all
    dependence on x runs through the copula.
    """
    if cfg.kind != "dgp2":
        raise DomainError("config is not a dgp2 configuration")
    a, b = cfg.e_dist.params
    rng = stream.generator()
    chol = np.linalg.cholesky(cfg.correlation_matrix())
    W = rng.standard_normal((cfg.n, 3)) @ chol.T
    e_star, x_star, u = W[:, 0], W[:, 1], W[:, 2]

    from .numerics import gamma_quantile
    e = gamma_quantile(a, b, _clip_prob(std_normal_cdf(e_star)))
    x = gamma_quantile(1.0, 1.0, _clip_prob(std_normal_cdf(x_star)))
    z = e
    y = cfg.beta0 + cfg.beta1 * x + cfg.gamma * z + u
    return Dataset(
        {"y": y, "x": x, "z": z, "eta_true": e_star, "e_true": e},
        provenance=f"dgp2(n={cfg.n}, e~Gamma{cfg.e_dist.params}, "
                   f"alpha={cfg.alpha}, rho={cfg.rho})")


def generate(cfg: DgpConfig, stream: RngStream) -> Dataset:
    return gen_dgp1(cfg, stream) if cfg.kind == "dgp1" else gen_dgp2(cfg, stream)


@dataclass(frozen=True)
class McCell:
    """Summary of one (estimator, coefficient) pair across repetitions."""

    bias: float
    std: float
    rmse: float
    size: float | None  # rejection rate of the true-value t-test, if tested


@dataclass(frozen=True)
class McSummary:
    """Bias / std / RMSE / size grid from a Monte Carlo run.

    ``std`` uses the 1/reps divisor so that rmse**2 == bias**2 + std**2
    holds exactly; the difference from the 1/(reps-1) convention is
    negligible at the rep counts used here.  ``draws`` holds the raw
    per-repetition coefficient estimates when the run was asked to keep
    them (estimator -> {coefficient -> list of reps values}).
    """

    cells: dict[tuple[str, str], McCell]
    reps: int
    completed: dict[str, int]
    config: DgpConfig
    B: int
    draws: dict[str, dict[str, list[float]]] | None = None

    def cell(self, estimator: str, coef: str) -> McCell:
        return self.cells[(estimator, coef)]

    def to_dict(self) -> dict:
        return {
            "reps": self.reps,
            "B": self.B,
            "completed": dict(self.completed),
            "config": {
                "kind": self.config.kind, "n": self.config.n,
                "e_gamma": list(self.config.e_dist.params),
                "delta": self.config.delta, "alpha": self.config.alpha,
                "rho": self.config.rho,
            },
            "cells": {
                f"{est}:{coef}": {"bias": c.bias, "std": c.std,
                                  "rmse": c.rmse, "size": c.size}
                for (est, coef), c in sorted(self.cells.items())
            },
        }

    def table(self, coefficients: tuple[str, ...] = ("x", "z")) -> str:
        """Text grid shaped like the reference simulation tables:
        rows bias/std/rmse/size, columns estimator x coefficient."""
        ests = sorted({e for e, _ in self.cells})
        header = ["      "] + [f"{e}:{c}" for c in coefficients for e in ests]
        widths = [max(len(h), 9) for h in header]
        lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
        for row in ("bias", "std", "rmse", "size"):
            vals = [row.ljust(widths[0])]
            i = 1
            for c in coefficients:
                for e in ests:
                    cell = self.cells.get((e, c))
                    v = getattr(cell, row) if cell else None
                    vals.append(("   --".rjust(widths[i]) if v is None
                                 else f"{v:.3f}".rjust(widths[i])))
                    i += 1
            lines.append("  ".join(vals))
        return "\n".join(lines)


def _n_threads() -> int:
    try:
        return max(1, int(os.environ.get("ENDOFIX_THREADS", "1")))
    except ValueError:
        return 1


def _one_rep(cfg: DgpConfig, estimators, B: int, master: RngStream,
             rep: int, truth: dict[str, float], tested: tuple[str, ...]):
    data = generate(cfg, master.child(rep, _DATA_KEY))
    out = {}
    for est in estimators:
        try:
            fit = ESTIMATORS[est](data, MODEL_SPEC)
            rejects = {}
            if B >= 2 and est != "ols":
                boot = pairs_bootstrap(data, MODEL_SPEC, est, B=B,
                                       seed=master.child(rep, _est_key(est)))
                for coef in tested:
                    j = fit.names.index(coef)
                    se = float(boot.se[j])
                    rejects[coef] = abs(fit.theta[j] - truth[coef]) > _Z975 * se
            elif est == "ols":
                se_all = fit.se()
                for coef in tested:
                    j = fit.names.index(coef)
                    rejects[coef] = (abs(fit.theta[j] - truth[coef])
                                     > _Z975 * float(se_all[j]))
            out[est] = (dict(zip(fit.names, fit.theta)), rejects)
        except (EndofixError, np.linalg.LinAlgError):
            out[est] = None
    return out


def mc_run(cfg: DgpConfig, estimators, reps: int, B: int,
           master: RngStream, keep_draws: bool = False) -> McSummary:
    """Run ``reps`` independent repetitions of generate-fit-test.

    Per repetition each estimator in ``estimators`` is fitted; 5%-level
    t-tests of the true coefficient values are run for the slope and the
    endogenous coefficient, with bootstrap standard errors (B resamples)
    for the corrected estimators and classical standard errors for plain
    OLS.  Pass ``B=0`` to skip the tests (bias/std/rmse only), which is
    much cheaper.  ``keep_draws`` retains the raw per-repetition
    estimates on the summary.  Fully deterministic given ``master``: data
    and bootstrap streams are keyed by (repetition, estimator identity),
    so neither the estimator ordering nor the thread count changes
    anything.
    """
    if reps < 2:
        raise DomainError("mc_run needs reps >= 2")
    estimators = tuple(estimators)
    for est in estimators:
        if est not in ESTIMATORS:
            raise DataError(f"unknown estimator {est!r}")
    truth = cfg.truth()
    tested = ("x", "z")

    n_threads = _n_threads()
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(
                lambda r: _one_rep(cfg, estimators, B, master, r, truth, tested),
                range(reps)))
    else:
        results = [_one_rep(cfg, estimators, B, master, r, truth, tested)
                   for r in range(reps)]

    cells: dict[tuple[str, str], McCell] = {}
    completed: dict[str, int] = {}
    draws: dict[str, dict[str, list[float]]] = {}
    for est in estimators:
        ok = [r[est] for r in results if r[est] is not None]
        completed[est] = len(ok)
        if not ok:
            continue
        coef_names = list(ok[0][0].keys())
        if keep_draws:
            draws[est] = {coef: [float(r[0][coef]) for r in ok]
                          for coef in coef_names}
        for coef in coef_names:
            vals = np.array([r[0][coef] for r in ok])
            true = truth.get(coef)
            if true is None:
                continue
            bias = float(vals.mean() - true)
            std = float(vals.std(ddof=0))
            rmse = math.sqrt(bias * bias + std * std)
            size = None
            if coef in tested and ok[0][1]:
                size = float(np.mean([r[1][coef] for r in ok]))
            cells[(est, coef)] = McCell(bias=bias, std=std, rmse=rmse, size=size)
    return McSummary(cells=cells, reps=reps, completed=completed, config=cfg,
                     B=B, draws=draws if keep_draws else None)
