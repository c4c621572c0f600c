"""The OLS control-variate estimator (OLSMC), naive Monte Carlo, and helpers.

All array-level routines take the integrand values ``f`` (length ``n``) and
the basis matrix ``H`` (``n x m``, entries h_j(X_i)) so that replication
studies can evaluate the basis once per sample.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import linalg, stats

from .bases import ControlBasis, evaluate_basis, gram
from .core import (DEFAULT_QUADRATURE, Integrand, QuadratureSpec, SamplePoints,
                   gauss_rule)
from .errors import InsufficientSamples, OnesInColumnSpace, SingularGram

# Relative pivot size below which a design column counts as dependent.
RANK_TOL = 1e-10
# Below this, 1_n is numerically in the column space of H.
DENOM_FLOOR = 1e-8

FORMS = ("regression", "projection")
QUANTILES = ("normal", "student_t")


@dataclass(frozen=True)
class EstimateReport:
    mu_hat: float
    sigma2_hat: float
    sigma2_hat_dof: float
    ci_low: float
    ci_high: float
    alpha: float
    n: int
    m: int
    denom: float
    method: str
    quantile: str = "normal"
    beta: Optional[np.ndarray] = None

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)

    def covers(self, mu: float) -> bool:
        return self.ci_low <= mu <= self.ci_high

    def summary(self) -> str:
        return (f"{self.method}: mu_hat = {self.mu_hat:.12g} +/- {self.half_width:.3g} "
                f"({100 * (1 - self.alpha):g}% CI, n={self.n}, m={self.m})")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "mu_hat", "sigma2_hat", "sigma2_hat_dof", "ci_low", "ci_high", "alpha",
            "n", "m", "denom", "method", "quantile")}


@dataclass(frozen=True)
class WeightVector:
    """Integration weights w with sum_i w_i g(X_i) = OLSMC estimate of P(g)."""

    weights: np.ndarray

    def integrate(self, values) -> float:
        return float(self.weights @ np.asarray(values, dtype=float))


@dataclass(frozen=True)
class BetaCoefficients:
    beta: np.ndarray
    source: str
    sigma2: Optional[float] = None
    mu: Optional[float] = None


@dataclass(frozen=True)
class CostRecord:
    basis_evals: int
    gram_ops: int
    solve_ops: int
    naive_equivalent_n: int

    @property
    def total(self) -> int:
        return self.basis_evals + self.gram_ops + self.solve_ops


# ---------------------------------------------------------------------------
# Linear-algebra kernels
# ---------------------------------------------------------------------------

def column_space_basis(H: np.ndarray) -> np.ndarray:
    """Orthonormal basis ``Q`` of the column space of ``H``.

    Raises
    ------
    SingularGram
        If a pivoted-QR diagonal entry falls below ``RANK_TOL`` times the largest.
    """
    n, m = H.shape
    if m == 0:
        return np.zeros((n, 0))
    Q, R, _ = linalg.qr(H, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size < m or diag[-1] <= RANK_TOL * diag[0]:
        raise SingularGram(f"empirical Gram matrix is rank-deficient (m={m}, n={n}); "
                           "reduce the number of control functions")
    return Q


def _denominator(Q: np.ndarray) -> float:
    """1 - P_n(h') P_n(hh')^{-1} P_n(h) = |(I - Pi) 1_n|^2 / n."""
    n = Q.shape[0]
    q1 = Q.sum(axis=0)
    return 1.0 - float(q1 @ q1) / n


def _checked_design(f: np.ndarray, H: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    f = np.asarray(f, dtype=float).ravel()
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != f.shape[0]:
        raise ValueError("H must be n x m with n = len(f)")
    n, m = H.shape
    if n < m + 2:
        raise InsufficientSamples(f"need n >= m + 2, got n={n}, m={m}")
    Q = column_space_basis(H)
    denom = _denominator(Q)
    if denom <= DENOM_FLOOR:
        raise OnesInColumnSpace(f"1_n is in the column space of H (denominator {denom:.3g}); "
                                "the intercept is not identifiable")
    return f, H, Q, denom


def _quantile(alpha: float, quantile: str, dof: int) -> float:
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if quantile == "normal":
        return float(stats.norm.ppf(1 - alpha / 2))
    if quantile == "student_t":
        return float(stats.t.ppf(1 - alpha / 2, dof))
    raise ValueError(f"unknown quantile rule {quantile!r}")


def _report(mu, sigma2, n, m, denom, alpha, quantile, method, beta=None) -> EstimateReport:
    sigma2 = max(float(sigma2), 0.0)
    dof = n - m - 1
    sigma2_dof = sigma2 * n / dof
    half = _quantile(alpha, quantile, dof) * np.sqrt(sigma2_dof / n)
    return EstimateReport(mu_hat=float(mu), sigma2_hat=sigma2, sigma2_hat_dof=sigma2_dof,
                          ci_low=float(mu - half), ci_high=float(mu + half), alpha=alpha,
                          n=n, m=m, denom=float(denom), method=method, quantile=quantile,
                          beta=beta)


def _regression_fit(f, H):
    # Centred least squares; the intercept is recovered from the column means.
    fbar = f.mean()
    if H.shape[1] == 0:
        resid = f - fbar
        return fbar, np.zeros(0), float(resid @ resid) / f.size
    hbar = H.mean(axis=0)
    Hc = H - hbar
    yc = f - fbar
    Qc, Rc = np.linalg.qr(Hc)
    beta = linalg.solve_triangular(Rc, Qc.T @ yc)
    resid = yc - Hc @ beta
    return fbar - hbar @ beta, beta, float(resid @ resid) / f.size


def _projection_fit(f, H):
    n, m = H.shape
    pf = f.mean()
    if m == 0:
        resid = f - pf
        return pf, np.zeros(0), float(resid @ resid) / n, 1.0
    HtH = H.T @ H
    cho = linalg.cho_factor(HtH)
    ph = H.mean(axis=0)
    pfh = f @ H / n
    c = linalg.cho_solve(cho, ph) * n  # P_n(hh')^{-1} P_n(h)
    denom = 1.0 - ph @ c
    mu = (pf - pfh @ c) / denom
    r = f - mu
    Htr = H.T @ r
    beta = linalg.cho_solve(cho, Htr)
    resid = r - H @ beta
    sigma2 = (resid @ resid) / n
    return mu, beta, sigma2, denom


def ols_fit(f, H, alpha: float = 0.05, form: str = "regression",
            quantile: str = "normal") -> EstimateReport:
    """OLSMC estimate from integrand values ``f`` and basis matrix ``H``.

    ``form="regression"`` solves the least-squares problem for the intercept
    by a QR factorisation of the centred design; ``form="projection"`` uses
    the closed form

        (P_n f - P_n(fh') P_n(hh')^{-1} P_n h) / (1 - P_n(h') P_n(hh')^{-1} P_n h).

    ``sigma2_hat`` is the residual sum of squares divided by ``n``;
    ``sigma2_hat_dof`` multiplies it by ``n / (n - m - 1)`` and sets the CI.
    """
    f, H, Q, denom = _checked_design(f, H)
    n, m = H.shape
    if form == "regression":
        mu, beta, sigma2 = _regression_fit(f, H)
    elif form == "projection":
        mu, beta, sigma2, denom = _projection_fit(f, H)
    else:
        raise ValueError(f"unknown form {form!r}")
    method = "ols_" + form
    return _report(mu, sigma2, n, m, denom, alpha, quantile, method, beta)


def ols_weights(H) -> np.ndarray:
    """Weights (I - Pi) 1_n / (1_n' (I - Pi) 1_n), Pi the hat matrix of H."""
    H = np.asarray(H, dtype=float)
    n, m = H.shape
    if n < m + 2:
        raise InsufficientSamples(f"need n >= m + 2, got n={n}, m={m}")
    Q = column_space_basis(H)
    denom = _denominator(Q)
    if denom <= DENOM_FLOOR:
        raise OnesInColumnSpace(f"1_n is in the column space of H (denominator {denom:.3g})")
    r = np.ones(n) - Q @ Q.sum(axis=0)
    # 1'(I - Pi)1 equals n * denom; summing r keeps sum(w) = 1 to rounding
    return r / r.sum()


# ---------------------------------------------------------------------------
# Public estimators
# ---------------------------------------------------------------------------

def naive_mc(f: Integrand, samples: SamplePoints, alpha: float = 0.05,
             quantile: str = "normal") -> EstimateReport:
    """Plain Monte Carlo: sample mean, CI from the unbiased sample variance."""
    if samples.n < 2:
        raise InsufficientSamples("naive Monte Carlo needs n >= 2")
    fv = f(samples.points)
    mu, _, sigma2 = _regression_fit(fv, np.zeros((samples.n, 0)))
    return _report(mu, sigma2, samples.n, 0, 1.0, alpha, quantile, "naive")


def olsmc(f: Integrand, samples: SamplePoints, basis: ControlBasis, alpha: float = 0.05,
          form: str = "regression", quantile: str = "normal") -> EstimateReport:
    """OLSMC estimate of P(f) with the controls in ``basis``.

    Raises
    ------
    SingularGram, OnesInColumnSpace, InsufficientSamples
    """
    return ols_fit(f(samples.points), evaluate_basis(basis, samples), alpha, form, quantile)


def olsmc_weights(samples: SamplePoints, basis: ControlBasis) -> WeightVector:
    return WeightVector(ols_weights(evaluate_basis(basis, samples)))


def beta_oracle(f: Integrand, basis: ControlBasis,
                spec: QuadratureSpec = DEFAULT_QUADRATURE) -> BetaCoefficients:
    """Population coefficient P(hh')^{-1} P(hf) and residual variance.

    The residual variance is the quadrature of (f - mu - beta'h)^2 rather
    than sigma^2(f) - P(fh') P(hh')^{-1} P(hf); both agree mathematically but
    the direct form does not cancel catastrophically when the residual is tiny.
    """
    G = gram(basis, spec)
    nodes, w = gauss_rule(basis.domain, spec, (*basis.breakpoints, *f.breakpoints))
    fv = f(nodes)
    H = basis(nodes)
    mu = float(w @ fv)
    phf = H.T @ (w * fv)
    beta = np.linalg.solve(G, phf) if basis.m else np.zeros(0)
    resid = fv - mu - H @ beta
    return BetaCoefficients(beta=beta, source="population_oracle",
                            sigma2=float(w @ resid ** 2), mu=mu)


def sigma2_opt_formula(f: Integrand, basis: ControlBasis,
                       spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """sigma^2(f) - P(fh') P(hh')^{-1} P(hf), evaluated by quadrature."""
    G = gram(basis, spec)
    nodes, w = gauss_rule(basis.domain, spec, (*basis.breakpoints, *f.breakpoints))
    fv = f(nodes)
    H = basis(nodes)
    mu = w @ fv
    phf = H.T @ (w * fv)
    explained = phf @ np.linalg.solve(G, phf) if basis.m else 0.0
    return float(w @ (fv - mu) ** 2 - explained)


def estimate_with_oracle_beta(f: Integrand, samples: SamplePoints, basis: ControlBasis,
                              beta, alpha: float = 0.05,
                              quantile: str = "normal") -> EstimateReport:
    """Unbiased estimate P_n(f - beta'h) for a fixed coefficient vector."""
    b = np.asarray(getattr(beta, "beta", beta), dtype=float)
    if b.shape != (basis.m,):
        raise ValueError(f"beta must have length m={basis.m}")
    n = samples.n
    if n < 2:
        raise InsufficientSamples("need n >= 2")
    g = f(samples.points) - evaluate_basis(basis, samples) @ b
    mu, _, sigma2 = _regression_fit(g, np.zeros((n, 0)))
    # no coefficient is estimated, so the d.o.f. correction is n / (n - 1)
    rep = _report(mu, sigma2, n, 0, 1.0, alpha, quantile, "oracle_beta", b)
    return replace(rep, m=basis.m)


def cost_model(n: int, m: int, localized: bool = False) -> CostRecord:
    """Operation counts for one OLSMC run and the budget-matched naive size.

    Dense controls cost O(n m^2) for the Gram matrix; localized controls
    (indicators, splines) only O(n m). The matched naive sample size is
    ``n m^2`` or ``n m`` respectively (``n`` when ``m = 0``).
    """
    if n < 0 or m < 0:
        raise ValueError("n and m must be >= 0")
    k = max(m, 1)
    return CostRecord(basis_evals=n * m,
                      gram_ops=n * m if localized else n * m * m,
                      solve_ops=m ** 3,
                      naive_equivalent_n=n * k if localized else n * k * k)
