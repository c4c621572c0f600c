"""Leverage function, empirical hat-matrix leverages and growth-rule checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .bases import FAMILY_ALIASES, ControlBasis, evaluate_basis, gram, graded_degree_vectors
from .core import DEFAULT_QUADRATURE, QuadratureSpec, SamplePoints, gauss_rule
from .estimator import column_space_basis
from .schedules import Schedule

HIGH_LEVERAGE_C = 3.0

# Sufficient growth rules m_n = o(n^p) for the leverage condition.
GROWTH_LIMITS = {
    "indicator_strata": (0.5, "m = o(n^(1/2))"),
    "legendre_1d": (1.0 / 3.0, "m = o(n^(1/3))"),
    "legendre_tensor": (1.0 / 3.0, "m^3 = o(n)"),
}


def _points(basis: ControlBasis, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(-1, basis.domain.dim)
    return x


def leverage_function(basis: ControlBasis, x, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> np.ndarray:
    """q(x) = h(x)' P(hh')^{-1} h(x) at one or more points.

    q depends only on the span of the controls: replacing h by A h for an
    invertible A leaves it unchanged.
    """
    H = basis(_points(basis, x))
    if basis.m == 0:
        return np.zeros(H.shape[0])
    if basis.analytic_gram_inv is not None:
        # integer-valued closed forms keep q(1) = m(m + 2) free of rounding
        return np.sum((H @ basis.analytic_gram_inv) * H, axis=1)
    L = linalg.cholesky(gram(basis, spec), lower=True)
    Z = linalg.solve_triangular(L, H.T, lower=True)
    return np.sum(Z * Z, axis=0)


def leverage_upper_bound(basis: ControlBasis, x, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> np.ndarray:
    """lambda_min(P(hh'))^{-1} * sum_j h_j(x)^2, an upper bound on q(x)."""
    H = basis(_points(basis, x))
    if basis.m == 0:
        return np.zeros(H.shape[0])
    lam = np.linalg.eigvalsh(gram(basis, spec))[0]
    return np.sum(H * H, axis=1) / lam


def empirical_leverages(H) -> np.ndarray:
    """Diagonal of the hat matrix of H (regression without intercept).

    Equals n^{-1} h(X_i)' P_n(hh')^{-1} h(X_i); the values sum to m.
    """
    Q = column_space_basis(np.asarray(H, dtype=float))
    return np.sum(Q * Q, axis=1)


def tensor_corner_leverage(m: int, d: int) -> float:
    """q at the corner (1, ..., 1) for the orthonormal tensor Legendre basis.

    Each normalised factor attains its maximum sqrt(2a + 1) there, so this
    is the exact supremum of q.
    """
    if m == 0:
        return 0.0
    degs = np.array(graded_degree_vectors(m, d))
    return float(np.prod(2 * degs + 1, axis=1).sum())


def analytic_sup_leverage(family: str, m: int, d: int = 1) -> Optional[float]:
    """Closed-form sup_x q(x) for the built-in families, else ``None``."""
    fam = FAMILY_ALIASES.get(family, family)
    if fam == "indicator_strata":
        return float(m)
    if fam == "legendre_1d":
        return float(m * (m + 2))
    if fam == "legendre_tensor":
        return tensor_corner_leverage(m, d)
    return None


def _probe_grid(basis: ControlBasis, per_axis: int = 1000) -> np.ndarray:
    dom = basis.domain
    if dom.dim <= 2:
        g = np.linspace(dom.lower, dom.upper, per_axis)
        mesh = np.meshgrid(*([g] * dom.dim), indexing="ij")
        return np.stack([c.ravel() for c in mesh], axis=1)
    # rank-1 Korobov-type lattice for d > 2
    n_pts = 2 ** 16
    gen = np.array([1, 19703, 28009, 6137, 16383, 30211, 4297, 22541][:dom.dim])
    if dom.dim > gen.size:
        gen = np.arange(1, dom.dim + 1) * 7919 % n_pts
    u = (np.arange(n_pts)[:, None] * gen[None, :] / n_pts) % 1.0
    return dom.lower + dom.width * u


def sup_leverage(basis: ControlBasis, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> tuple[float, bool]:
    """``(sup_q, exact)``; non-built-in families fall back to a probe grid.

    A grid value is only a lower bound on the true supremum.
    """
    val = analytic_sup_leverage(basis.family, basis.m, basis.domain.dim)
    if val is not None:
        return val, True
    grid = _probe_grid(basis)
    best = max(float(leverage_function(basis, grid[i:i + 65536], spec).max())
               for i in range(0, grid.shape[0], 65536))
    return best, False


def mean_leverage(basis: ControlBasis, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Quadrature of q over the domain; equals m."""
    if basis.m == 0:
        return 0.0
    nodes, w = gauss_rule(basis.domain, spec, basis.breakpoints)
    return float(w @ leverage_function(basis, nodes, spec))


@dataclass(frozen=True)
class LeverageProfile:
    m: int
    n: int
    sup_q: float
    sup_q_exact: bool
    mean_q_quad: float
    empirical_leverages: np.ndarray
    max_empirical: float
    high_leverage_flags: np.ndarray
    c: float = HIGH_LEVERAGE_C

    def summary(self) -> str:
        kind = "" if self.sup_q_exact else " (grid lower bound)"
        return (f"m={self.m} n={self.n} sup_q={self.sup_q:.6g}{kind} mean_q={self.mean_q_quad:.6g} "
                f"max_leverage={self.max_empirical:.4g} flagged={self.high_leverage_flags.size}")


def leverage_profile(basis: ControlBasis, samples: SamplePoints, c: float = HIGH_LEVERAGE_C,
                     spec: QuadratureSpec = DEFAULT_QUADRATURE) -> LeverageProfile:
    """Population and empirical leverage summary for one sample.

    Points with hat value above ``c * m / n`` are flagged.
    """
    sup_q, exact = sup_leverage(basis, spec)
    lev = empirical_leverages(evaluate_basis(basis, samples))
    n, m = samples.n, basis.m
    return LeverageProfile(m=m, n=n, sup_q=sup_q, sup_q_exact=exact,
                           mean_q_quad=mean_leverage(basis, spec),
                           empirical_leverages=lev,
                           max_empirical=float(lev.max()) if lev.size else 0.0,
                           high_leverage_flags=np.flatnonzero(lev > c * m / n),
                           c=c)


@dataclass(frozen=True)
class GrowthVerdict:
    family: str
    n_grid: tuple
    m_values: tuple
    ratios: tuple
    decreasing: bool
    sufficient_rule: str
    schedule_power: Optional[float] = None
    power_limit: Optional[float] = None
    within_rule: Optional[bool] = None
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.decreasing and self.within_rule is not False

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"


def check_growth_rule(family: str, schedule, n_grid: Sequence[int], d: int = 1) -> GrowthVerdict:
    """Tabulate sup_q(m_n) * m_n / n along ``n_grid``.

    The leverage condition asks for this ratio to vanish. The numerical
    verdict requires a strictly decreasing sequence; for power schedules the
    exponent is also compared with the family's sufficient rule.
    """
    fam = FAMILY_ALIASES.get(family, family)
    sched = Schedule.parse(schedule)
    ns = tuple(int(n) for n in n_grid)
    ms = tuple(sched(n) for n in ns)
    ratios = []
    for n, m in zip(ns, ms):
        sq = analytic_sup_leverage(fam, m, d)
        if sq is None:
            raise ValueError(f"no analytic leverage supremum for family {family!r}")
        ratios.append(sq * m / n)
    decreasing = all(b < a or a == b == 0 for a, b in zip(ratios, ratios[1:]))
    limit, rule = GROWTH_LIMITS[fam]
    notes = []
    if fam == "indicator_strata":
        notes.append("sup q = m, so the rule reads m^2 = o(n)")
    within = sched.power < limit
    return GrowthVerdict(family=fam, n_grid=ns, m_values=ms, ratios=tuple(ratios),
                         decreasing=decreasing, sufficient_rule=rule,
                         schedule_power=sched.power, power_limit=limit,
                         within_rule=within, notes=notes)
