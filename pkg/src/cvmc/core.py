"""Domains, integrands, reproducible uniform sampling and the quadrature oracle.

The reference distribution P is always the uniform law on a box domain.
Integrals returned here are expectations under P, i.e. Lebesgue integrals
divided by the volume of the domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NonFinite

MASK64 = (1 << 64) - 1

DOMAIN_KINDS = ("unit_interval_01", "interval_m1_p1", "unit_cube", "cube_m1_p1")
QUADRATURE_RULES = ("gauss_legendre", "tensor_gauss_legendre", "adaptive_panel")

# Tensor Gauss rules are only built up to this dimension.
MAX_QUAD_DIM = 3


@dataclass(frozen=True)
class Domain:
    kind: str
    dim: int = 1

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("domain dimension must be >= 1")
        if self.kind in ("unit_interval_01", "interval_m1_p1") and self.dim != 1:
            raise ValueError(f"{self.kind} is one-dimensional")

    @classmethod
    def unit_interval(cls) -> "Domain":
        return cls("unit_interval_01", 1)

    @classmethod
    def symmetric_interval(cls) -> "Domain":
        return cls("interval_m1_p1", 1)

    @classmethod
    def unit_cube(cls, d: int) -> "Domain":
        return cls("unit_interval_01", 1) if d == 1 else cls("unit_cube", d)

    @classmethod
    def symmetric_cube(cls, d: int) -> "Domain":
        return cls("interval_m1_p1", 1) if d == 1 else cls("cube_m1_p1", d)

    @property
    def lower(self) -> float:
        return 0.0 if self.kind in ("unit_interval_01", "unit_cube") else -1.0

    @property
    def upper(self) -> float:
        return 1.0

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def symmetric(self) -> bool:
        return self.lower == -1.0

    def contains(self, points: np.ndarray) -> bool:
        pts = np.asarray(points, dtype=float)
        return bool(np.all(pts >= self.lower) and np.all(pts <= self.upper))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dim": self.dim}


@dataclass(frozen=True)
class SamplePoints:
    """An ``(n, d)`` batch of i.i.d. uniform draws on ``domain``."""

    domain: Domain
    points: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True)
class Integrand:
    """A vectorised integrand.

    ``eval`` maps an ``(N, d)`` array of points to ``N`` values. ``breakpoints``
    lists coordinates where the integrand is not smooth; quadrature rules split
    their panels there.
    """

    id: str
    eval: Callable[[np.ndarray], np.ndarray]
    true_mean: Optional[float] = None
    breakpoints: tuple = ()

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        return np.asarray(self.eval(x), dtype=float).reshape(x.shape[0])


@dataclass(frozen=True)
class QuadratureSpec:
    rule: str = "gauss_legendre"
    nodes_per_axis: int = 64
    abs_tol: float = 1e-12
    breakpoints: tuple = field(default=())

    def __post_init__(self):
        if self.rule not in QUADRATURE_RULES:
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        if self.nodes_per_axis < 2:
            raise ValueError("nodes_per_axis must be >= 2")
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")


DEFAULT_QUADRATURE = QuadratureSpec()


# ---------------------------------------------------------------------------
# Seeding
# ---------------------------------------------------------------------------

def splitmix64(x: int) -> int:
    """One step of the SplitMix64 output function (Steele et al.)."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def replication_seed(seed: int, r: int) -> int:
    """Seed of replication ``r``: ``seed XOR splitmix64(r)``."""
    return (int(seed) & MASK64) ^ splitmix64(int(r))


def draw_samples(domain: Domain, n: int, seed: int) -> SamplePoints:
    """Draw ``n`` i.i.d. uniform points on ``domain``.

    The same ``(domain, n, seed)`` triple always yields bit-identical points.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    seed = int(seed) & MASK64
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.random((n, domain.dim))
    pts = domain.lower + domain.width * u if domain.symmetric else u
    pts.setflags(write=False)
    return SamplePoints(domain=domain, points=pts, seed=seed)


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

def _panel_edges(lo: float, hi: float, breakpoints: Sequence[float]) -> np.ndarray:
    inner = sorted({float(b) for b in breakpoints if lo < b < hi})
    return np.array([lo, *inner, hi])


def _composite_1d(edges: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(k)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (b - a) * x + 0.5 * (a + b)).ravel()
    weights = (0.5 * (b - a) * w).ravel()
    return nodes, weights / weights.sum()


def gauss_rule(domain: Domain, spec: QuadratureSpec = DEFAULT_QUADRATURE,
               breakpoints: Sequence[float] = ()) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre nodes ``(N, d)`` and probability weights ``(N,)``.

    Each axis is split into panels at ``breakpoints`` (shared by all axes)
    and every panel carries ``spec.nodes_per_axis`` nodes.
    """
    if domain.dim > MAX_QUAD_DIM:
        raise ValueError(
            f"quadrature is limited to d <= {MAX_QUAD_DIM}; declare true_mean instead")
    edges = _panel_edges(domain.lower, domain.upper, (*spec.breakpoints, *breakpoints))
    x1, w1 = _composite_1d(edges, spec.nodes_per_axis)
    if domain.dim == 1:
        return x1[:, None], w1
    grids = np.meshgrid(*([x1] * domain.dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = w1
    for _ in range(domain.dim - 1):
        weights = np.multiply.outer(weights, w1)
    return nodes, weights.ravel()


def _check_finite(values: np.ndarray, label: str) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise NonFinite(f"{label} returned a non-finite value at a quadrature node")
    return values


def quad_expect(func: Callable[[np.ndarray], np.ndarray], domain: Domain,
                spec: QuadratureSpec = DEFAULT_QUADRATURE,
                breakpoints: Sequence[float] = ()) -> np.ndarray:
    """Expectation under P of a (possibly vector-valued) function.

    ``func`` maps ``(N, d)`` points to ``(N,)`` or ``(N, k)`` values. Uses the
    fixed tensor Gauss rule; see :func:`quad_integrate` for the adaptive rule.
    """
    nodes, weights = gauss_rule(domain, spec, breakpoints)
    values = _check_finite(np.asarray(func(nodes), dtype=float), getattr(func, "id", "function"))
    return np.tensordot(weights, values, axes=(0, 0))


def _adaptive_1d(func, edges, k, tol, max_depth=60):
    x, w = np.polynomial.legendre.leggauss(k)

    def panel(a, b):
        vals = np.asarray(func(((0.5 * (b - a)) * x + 0.5 * (a + b))[:, None]), dtype=float)
        _check_finite(vals, getattr(func, "id", "function"))
        return 0.5 * (b - a) * float(w @ vals)

    total_width = edges[-1] - edges[0]
    total = 0.0
    stack = [(a, b, panel(a, b), 0) for a, b in zip(edges[:-1], edges[1:])]
    while stack:
        a, b, coarse, depth = stack.pop()
        mid = 0.5 * (a + b)
        left, right = panel(a, mid), panel(mid, b)
        if abs(left + right - coarse) <= tol * (b - a) or depth >= max_depth:
            total += left + right
        else:
            stack.append((a, mid, left, depth + 1))
            stack.append((mid, b, right, depth + 1))
    return total / total_width


def quad_integrate(f, domain: Domain, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Integral of ``f`` against the uniform law on ``domain``.

    Gauss rules with ``k`` nodes per axis are exact for polynomials of degree
    up to ``2k - 1`` in each coordinate. The ``adaptive_panel`` rule bisects
    one-dimensional panels until successive estimates agree to ``abs_tol``.

    Raises
    ------
    NonFinite
        If ``f`` is NaN or infinite at a node.
    """
    bps = tuple(getattr(f, "breakpoints", ()))
    if spec.rule == "adaptive_panel":
        if domain.dim != 1:
            raise ValueError("adaptive_panel is one-dimensional")
        edges = _panel_edges(domain.lower, domain.upper, (*spec.breakpoints, *bps))
        return float(_adaptive_1d(f, edges, spec.nodes_per_axis, spec.abs_tol))
    return float(quad_expect(f, domain, spec, bps))


def true_mean(f: Integrand, domain: Domain, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Declared mean of ``f`` if present, else the quadrature value."""
    if f.true_mean is not None:
        return float(f.true_mean)
    return quad_integrate(f, domain, spec)
