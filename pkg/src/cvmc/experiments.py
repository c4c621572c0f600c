"""Replication studies: convergence rate, normality, coverage, budget contests.

Every replication draws its own sample from a seed derived from the study
seed, the grid index and the replication index, so results do not depend on
the number of worker threads or on completion order.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .bases import FAMILY_ALIASES, ControlBasis, family_domain, feasible_m, make_basis
from .core import DEFAULT_QUADRATURE, MAX_QUAD_DIM, Integrand, draw_samples, replication_seed, true_mean
from .errors import DegenerateSigma, EstimatorError, StudyAborted
from .estimator import beta_oracle, cost_model, ols_fit
from .integrands import get_integrand
from .schedules import Schedule

STUDIES = ("rate", "normality", "coverage", "budget", "sigma_consistency")

CSV_FIELDS = ("n", "m", "rmse", "mean_sigma2_hat", "oracle_sigma2", "coverage",
              "ks_stat", "ks_pvalue", "failures", "op_count", "wallclock_ns")

# Below this relative size the residual variance is treated as zero.
DEGENERATE_REL = 1e-26
# Replications in the naive arm of a budget study use a separate seed stream.
_NAIVE_STREAM = 1 << 20


@dataclass(frozen=True)
class StudySpec:
    study: str
    integrand_id: str
    basis_family: str
    schedule: Schedule
    n_grid: tuple
    reps: int
    alpha: float = 0.05
    seed: int = 0
    d: int = 1
    form: str = "regression"
    quantile: str = "normal"
    localized: Optional[bool] = None
    control_arm: bool = True
    slope_band: Optional[tuple] = None
    control_slope_band: Optional[tuple] = None
    ks_threshold: float = 0.01
    ratio_band: tuple = (0.9, 1.1)
    max_failure_rate: float = 0.01
    threads: int = 1

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ValueError(f"unknown study {self.study!r}")
        if self.reps < 2:
            raise ValueError("reps must be >= 2")
        grid = tuple(int(n) for n in self.n_grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("n_grid must be non-empty and strictly increasing")
        object.__setattr__(self, "n_grid", grid)
        object.__setattr__(self, "schedule", Schedule.parse(self.schedule))
        if self.basis_family not in FAMILY_ALIASES:
            raise ValueError(f"unknown basis family {self.basis_family!r}")

    @property
    def family(self) -> str:
        return FAMILY_ALIASES[self.basis_family]

    @property
    def is_localized(self) -> bool:
        if self.localized is not None:
            return self.localized
        return self.family == "indicator_strata"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["schedule"] = str(self.schedule)
        out["n_grid"] = list(self.n_grid)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "StudySpec":
        data = dict(data)
        for key in ("slope_band", "control_slope_band", "ratio_band"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        data["n_grid"] = tuple(data["n_grid"])
        return cls(**data)


@dataclass
class StudyRow:
    n: int
    m: int
    rmse: float
    mean_sigma2_hat: float
    oracle_sigma2: float
    coverage: float
    ks_stat: float
    ks_pvalue: float
    failures: int
    op_count: int
    wallclock_ns: int
    arm: str = "olsmc"
    extra: dict = field(default_factory=dict)

    @property
    def normalized_rmse(self) -> float:
        """RMSE / (sigma_n / sqrt(n))."""
        if not self.oracle_sigma2 > 0:
            return math.nan
        return self.rmse / math.sqrt(self.oracle_sigma2 / self.n)

    @property
    def sigma_ratio(self) -> float:
        if not self.oracle_sigma2 > 0:
            return math.nan
        return self.mean_sigma2_hat / self.oracle_sigma2

    def csv_values(self) -> list:
        return [getattr(self, k) for k in CSV_FIELDS]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    value: Optional[float] = None
    detail: str = ""


@dataclass
class StudyResult:
    spec: StudySpec
    rows: list
    fitted_slope: Optional[float] = None
    verdicts: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def verdict(self, name: str) -> Verdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)

    def arm(self, name: str) -> list:
        return [r for r in self.rows if r.arm == name]

    def summary(self) -> str:
        parts = [f"{v.name}={'PASS' if v.passed else 'FAIL'}"
                 + (f"({v.value:.4g})" if v.value is not None else "") for v in self.verdicts]
        status = "PASS" if self.passed else "FAIL"
        return f"study {self.spec.study}: {status} " + " ".join(parts)


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------

def step_integrand_sigma(u: float, k: int) -> float:
    """Residual variance of 1{x >= u} projected on k equal strata of [0, 1].

    With a = floor(u k) / k and b = a + 1/k the value is k (b - u)(u - a).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0 < u < 1:
        raise ValueError("u must lie in (0, 1)")
    a = math.floor(u * k) / k
    b = a + 1.0 / k
    return k * (b - u) * (u - a)


def fit_loglog_slope(ns, rmses) -> float:
    """Least-squares slope of log RMSE against log n."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.asarray(rmses, dtype=float)
    if y.size < 2 or not np.all(np.isfinite(y)) or np.any(y <= 0):
        return math.nan
    return float(np.polyfit(x, np.log(y), 1)[0])


def ks_normal(z) -> tuple[float, float]:
    """Kolmogorov-Smirnov test of ``z`` against N(0, 1).

    The exact small-sample distribution is used up to 10^4 observations.
    """
    z = np.asarray(z, dtype=float)
    if z.size < 2 or not np.all(np.isfinite(z)):
        return math.nan, math.nan
    method = "exact" if z.size <= 10_000 else "asymp"
    res = stats.kstest(z, "norm", method=method)
    return float(res.statistic), float(res.pvalue)


def coverage_band(alpha: float, reps: int, width: float = 3.0) -> tuple[float, float]:
    """Binomial band of +/- ``width`` standard errors around 1 - alpha."""
    p = 1 - alpha
    half = width * math.sqrt(p * (1 - p) / reps)
    return p - half, p + half


# ---------------------------------------------------------------------------
# Replication engine
# ---------------------------------------------------------------------------

@dataclass
class _ArmRuns:
    mu_hat: np.ndarray
    sigma2_hat: np.ndarray
    sigma2_dof: np.ndarray
    failed: np.ndarray
    wallclock_ns: int


def _run_arms(spec: StudySpec, f: Integrand, bases: list, n: int, stream: int) -> list:
    """Replicate OLSMC for several bases on shared samples of size n."""
    domain = family_domain(spec.family, spec.d)
    stream_seed = replication_seed(spec.seed, stream)

    def one(r):
        t0 = time.perf_counter_ns()
        s = draw_samples(domain, n, replication_seed(stream_seed, r))
        fv = f(s.points)
        shared = time.perf_counter_ns() - t0
        out = []
        for b in bases:
            t1 = time.perf_counter_ns()
            try:
                rep = ols_fit(fv, b(s.points), spec.alpha, spec.form, spec.quantile)
                vals = (rep.mu_hat, rep.sigma2_hat, rep.sigma2_hat_dof, False)
            except EstimatorError:
                vals = (math.nan, math.nan, math.nan, True)
            out.append((*vals, shared + time.perf_counter_ns() - t1))
        return out

    if spec.threads > 1:
        with ThreadPoolExecutor(max_workers=spec.threads) as pool:
            results = list(pool.map(one, range(spec.reps)))
    else:
        results = [one(r) for r in range(spec.reps)]
    arms = []
    for j in range(len(bases)):
        cols = list(zip(*(res[j] for res in results)))
        arms.append(_ArmRuns(mu_hat=np.array(cols[0]), sigma2_hat=np.array(cols[1]),
                             sigma2_dof=np.array(cols[2]), failed=np.array(cols[3], dtype=bool),
                             wallclock_ns=int(sum(cols[4]))))
    return arms


def _oracle_sigma2(f: Integrand, basis: ControlBasis) -> float:
    if basis.domain.dim > MAX_QUAD_DIM:
        return math.nan
    return beta_oracle(f, basis, DEFAULT_QUADRATURE).sigma2


def _summarise(spec: StudySpec, runs: _ArmRuns, mu: float, n: int, m: int,
               oracle_sigma2: float, arm: str) -> StudyRow:
    failures = int(runs.failed.sum())
    if failures > spec.max_failure_rate * spec.reps:
        raise StudyAborted(f"{failures} of {spec.reps} replications failed at n={n}, m={m}")
    ok = ~runs.failed
    err = runs.mu_hat[ok] - mu
    s2 = runs.sigma2_hat[ok]
    s2dof = runs.sigma2_dof[ok]
    dof = n - m - 1
    z_n = stats.norm.ppf(1 - spec.alpha / 2)
    z_t = stats.t.ppf(1 - spec.alpha / 2, dof)
    se = np.sqrt(s2dof / n)
    cov_normal = float(np.mean(np.abs(err) <= z_n * se))
    cov_t = float(np.mean(np.abs(err) <= z_t * se))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.sqrt(n) * err / np.sqrt(s2)
    ks_stat, ks_p = ks_normal(z)
    extra = {"coverage_normal": cov_normal, "coverage_student_t": cov_t}
    if oracle_sigma2 > 0:
        ks_o, ks_po = ks_normal(np.sqrt(n) * err / math.sqrt(oracle_sigma2))
        extra.update(ks_stat_oracle=ks_o, ks_pvalue_oracle=ks_po)
    ops = n + cost_model(n, m, spec.is_localized).total
    return StudyRow(n=n, m=m, rmse=float(np.sqrt(np.mean(err ** 2))),
                    mean_sigma2_hat=float(np.mean(s2)), oracle_sigma2=float(oracle_sigma2),
                    coverage=cov_t if spec.quantile == "student_t" else cov_normal,
                    ks_stat=ks_stat, ks_pvalue=ks_p, failures=failures, op_count=int(ops),
                    wallclock_ns=runs.wallclock_ns, arm=arm, extra=extra)


def _m_at(spec: StudySpec, n: int) -> int:
    return feasible_m(spec.family, spec.schedule(n), spec.d)


def _setup(spec: StudySpec):
    domain = family_domain(spec.family, spec.d)
    # affine integrands need a basis with at least one full grid of controls
    probe_basis = make_basis(spec.family, max(_m_at(spec, spec.n_grid[-1]), 2 ** spec.d - 1), spec.d)
    f = get_integrand(spec.integrand_id, domain, probe_basis)
    return f, true_mean(f, domain)


def _is_degenerate(f: Integrand, basis: ControlBasis, sigma2: float) -> bool:
    scale = _oracle_sigma2(f, make_basis(basis.family, 0, basis.domain.dim))
    return not sigma2 > DEGENERATE_REL * max(scale, 1e-300)


def _standard_rows(spec: StudySpec, control: bool) -> list:
    f, mu = _setup(spec)
    rows = []
    for i, n in enumerate(spec.n_grid):
        m = _m_at(spec, n)
        basis = make_basis(spec.family, m, spec.d)
        bases = [basis]
        if control and m > 0:
            bases.append(make_basis(spec.family, 0, spec.d))
        runs = _run_arms(spec, f, bases, n, stream=i)
        rows.append(_summarise(spec, runs[0], mu, n, m, _oracle_sigma2(f, basis), "olsmc"))
        if len(bases) > 1:
            rows.append(_summarise(spec, runs[1], mu, n, 0, _oracle_sigma2(f, bases[1]), "naive"))
    return rows


def _check_not_degenerate(spec: StudySpec):
    f, _ = _setup(spec)
    for n in spec.n_grid:
        basis = make_basis(spec.family, _m_at(spec, n), spec.d)
        s2 = _oracle_sigma2(f, basis)
        if math.isfinite(s2) and _is_degenerate(f, basis, s2):
            raise DegenerateSigma(
                f"{spec.integrand_id} lies in the span of {basis.m} controls (sigma_n = 0); "
                "the error cannot be normalised")


# ---------------------------------------------------------------------------
# Studies
# ---------------------------------------------------------------------------

def run_rate_study(spec: StudySpec) -> StudyResult:
    """RMSE against the true mean along the grid and its log-log slope.

    A naive Monte Carlo control arm on the same samples is added unless
    ``spec.control_arm`` is false or the schedule is identically zero.
    """
    rows = _standard_rows(spec, spec.control_arm)
    ols = [r for r in rows if r.arm == "olsmc"]
    slope = fit_loglog_slope([r.n for r in ols], [r.rmse for r in ols])
    verdicts = []
    last = ols[-1]
    exact = not last.oracle_sigma2 > 0 or _is_exact_fit(spec, last)
    if exact:
        verdicts.append(Verdict("exact", last.rmse <= 1e-10, last.rmse))
    else:
        ratio = last.normalized_rmse
        verdicts.append(Verdict("normalized_rmse_bounded", 0.5 <= ratio <= 2.0, ratio,
                                "RMSE / (sigma_n / sqrt(n)) at the largest n"))
        if spec.slope_band is not None:
            lo, hi = spec.slope_band
            verdicts.append(Verdict("slope_in_band", lo <= slope <= hi, slope, f"[{lo}, {hi}]"))
        else:
            verdicts.append(Verdict("slope_finite", math.isfinite(slope), slope))
    naive = [r for r in rows if r.arm == "naive"]
    if naive:
        cslope = fit_loglog_slope([r.n for r in naive], [r.rmse for r in naive])
        if spec.control_slope_band is not None:
            lo, hi = spec.control_slope_band
            verdicts.append(Verdict("control_slope_in_band", lo <= cslope <= hi, cslope,
                                    f"[{lo}, {hi}]"))
        else:
            verdicts.append(Verdict("control_slope_finite", math.isfinite(cslope), cslope))
    return StudyResult(spec=spec, rows=rows, fitted_slope=slope, verdicts=verdicts)


def _is_exact_fit(spec: StudySpec, row: StudyRow) -> bool:
    f, _ = _setup(spec)
    basis = make_basis(spec.family, row.m, spec.d)
    return _is_degenerate(f, basis, row.oracle_sigma2)


def _require_reps(spec: StudySpec, minimum: int = 500):
    if spec.reps < minimum:
        raise ValueError(f"{spec.study} study needs reps >= {minimum}")


def run_normality_study(spec: StudySpec) -> StudyResult:
    """KS test of sqrt(n)(mu_hat - mu)/sigma_hat against N(0, 1) at every n.

    Also reports mean sigma_hat^2 / sigma_n^2 with sigma_n from quadrature.

    Raises
    ------
    DegenerateSigma
        If the integrand lies in the control span.
    """
    _require_reps(spec)
    _check_not_degenerate(spec)
    rows = _standard_rows(spec, control=False)
    verdicts = [Verdict(f"ks_pvalue_n{r.n}", r.ks_pvalue > spec.ks_threshold, r.ks_pvalue,
                        f"> {spec.ks_threshold}") for r in rows]
    lo, hi = spec.ratio_band
    last = rows[-1]
    if math.isfinite(last.sigma_ratio):
        verdicts.append(Verdict("sigma_ratio", lo <= last.sigma_ratio <= hi, last.sigma_ratio,
                                f"[{lo}, {hi}] at the largest n"))
    return StudyResult(spec=spec, rows=rows, verdicts=verdicts)


def run_coverage_study(spec: StudySpec) -> StudyResult:
    """Fraction of confidence intervals containing mu, for both quantile rules."""
    _require_reps(spec)
    rows = _standard_rows(spec, control=False)
    lo, hi = coverage_band(spec.alpha, spec.reps)
    verdicts = [Verdict(f"coverage_n{r.n}", lo <= r.coverage <= hi, r.coverage,
                        f"[{lo:.4f}, {hi:.4f}]") for r in rows]
    return StudyResult(spec=spec, rows=rows, verdicts=verdicts)


def run_sigma_consistency_study(spec: StudySpec) -> StudyResult:
    """Mean sigma_hat^2 / sigma_n^2 along the grid; should approach 1."""
    _check_not_degenerate(spec)
    rows = _standard_rows(spec, control=False)
    lo, hi = spec.ratio_band
    last = rows[-1]
    return StudyResult(spec=spec, rows=rows, verdicts=[
        Verdict("sigma_ratio", lo <= last.sigma_ratio <= hi, last.sigma_ratio,
                f"[{lo}, {hi}] at the largest n")])


def run_budget_study(spec: StudySpec) -> StudyResult:
    """OLSMC at n against naive Monte Carlo at the cost-matched sample size.

    The predicted winner compares sigma_m with sigma(f)/m (dense Gram) or
    sigma(f)/sqrt(m) (localized controls). A win by OLSMC is only required
    where it is predicted; otherwise the verdict checks the prediction.
    """
    f, mu = _setup(spec)
    empty = make_basis(spec.family, 0, spec.d)
    sigma2_f = _oracle_sigma2(f, empty)
    rows = []
    verdicts = []
    for i, n in enumerate(spec.n_grid):
        m = _m_at(spec, n)
        basis = make_basis(spec.family, m, spec.d)
        ols_runs = _run_arms(spec, f, [basis], n, stream=i)[0]
        ols_row = _summarise(spec, ols_runs, mu, n, m, _oracle_sigma2(f, basis), "olsmc")
        n_eq = cost_model(n, m, spec.is_localized).naive_equivalent_n
        naive_runs = _run_arms(spec, f, [empty], n_eq, stream=_NAIVE_STREAM + i)[0]
        naive_row = _summarise(spec, naive_runs, mu, n_eq, 0, sigma2_f, "naive_matched")
        ratio = ols_row.rmse / naive_row.rmse if naive_row.rmse > 0 else math.nan
        k = max(m, 1)
        threshold = math.sqrt(sigma2_f) / (math.sqrt(k) if spec.is_localized else k)
        if m == 0:
            predicted = "tie"
        else:
            predicted = "olsmc" if math.sqrt(max(ols_row.oracle_sigma2, 0.0)) < threshold else "naive"
        ols_row.extra.update(rmse_ratio=ratio, matched_n=n_eq, predicted_winner=predicted)
        rows += [ols_row, naive_row]
    last = rows[-2]
    ratio = last.extra["rmse_ratio"]
    predicted = last.extra["predicted_winner"]
    observed = "olsmc" if ratio < 1.0 else "naive"
    if predicted == "tie":
        # identical estimators: the RMSE ratio of two independent arms has sd ~ 1/sqrt(reps)
        observed = "tie" if abs(ratio - 1.0) <= 4.0 / math.sqrt(spec.reps) else observed
    if predicted == "olsmc":
        verdicts.append(Verdict("olsmc_wins_at_largest_n", ratio < 1.0, ratio,
                                "OLSMC RMSE / matched naive RMSE"))
    verdicts.append(Verdict("prediction_matches_at_largest_n", observed == predicted, ratio,
                            f"predicted {predicted}, observed {observed}"))
    return StudyResult(spec=spec, rows=rows, verdicts=verdicts)


RUNNERS = {
    "rate": run_rate_study,
    "normality": run_normality_study,
    "coverage": run_coverage_study,
    "budget": run_budget_study,
    "sigma_consistency": run_sigma_consistency_study,
}


def run_study(spec: StudySpec) -> StudyResult:
    return RUNNERS[spec.study](spec)
