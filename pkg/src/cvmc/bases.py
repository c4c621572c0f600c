"""Zero-mean control-variate families and their Gram matrices."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg

from .core import (DEFAULT_QUADRATURE, Domain, QuadratureSpec, SamplePoints,
                   gauss_rule, quad_expect)
from .errors import RankDeficient

FAMILIES = ("indicator_strata", "legendre_1d", "legendre_tensor", "custom")

# Short names accepted by make_basis and the CLI.
FAMILY_ALIASES = {
    "indicator": "indicator_strata",
    "indicators": "indicator_strata",
    "indicator_strata": "indicator_strata",
    "legendre": "legendre_1d",
    "legendre_1d": "legendre_1d",
    "tensor": "legendre_tensor",
    "legendre_tensor": "legendre_tensor",
}

GRAM_EIG_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class ControlBasis:
    """A vector h = (h_1, ..., h_m) of control functions with P(h_j) = 0.

    ``evaluator`` maps ``(N, d)`` points to an ``(N, m)`` array. Built-in
    families fill ``analytic_gram`` and its closed-form inverse
    ``analytic_gram_inv``; ``breakpoints`` marks discontinuities so that
    quadrature Gram matrices can split panels there.
    """

    family: str
    m: int
    domain: Domain
    evaluator: Callable[[np.ndarray], np.ndarray]
    degree_vectors: Optional[tuple] = None
    analytic_gram: Optional[np.ndarray] = None
    breakpoints: tuple = ()
    analytic_gram_inv: Optional[np.ndarray] = None

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, self.domain.dim)
        if self.m == 0:
            return np.zeros((x.shape[0], 0))
        return self.evaluator(x)


# ---------------------------------------------------------------------------
# Legendre polynomials
# ---------------------------------------------------------------------------

def legendre_values(x, degree: int) -> np.ndarray:
    """Values of L_0, ..., L_degree at ``x``, shape ``x.shape + (degree + 1,)``.

    Uses Bonnet's recurrence (j + 1) L_{j+1} = (2j + 1) x L_j - j L_{j-1}.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (degree + 1,))
    out[..., 0] = 1.0
    if degree >= 1:
        out[..., 1] = x
    for j in range(1, degree):
        out[..., j + 1] = ((2 * j + 1) * x * out[..., j] - j * out[..., j - 1]) / (j + 1)
    return out


def graded_degree_vectors(m: int, d: int) -> list[tuple[int, ...]]:
    """First ``m`` nonzero degree vectors in N^d, graded by max-degree.

    Every vector with max-degree ``a`` precedes any vector with a coordinate
    equal to ``a + 1``. Within one max-degree level, vectors are ordered
    colexicographically (compare the last coordinate first), so for ``d = 2``
    the sequence starts (1,0), (0,1), (1,1), (2,0), (2,1), (0,2), ...
    """
    out: list[tuple[int, ...]] = []
    a = 0
    while len(out) < m:
        a += 1
        level = [v for v in itertools.product(range(a + 1), repeat=d) if max(v) == a]
        level.sort(key=lambda v: v[::-1])
        out.extend(level)
    return out[:m]


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------

def _empty_basis(family: str, domain: Domain) -> ControlBasis:
    return ControlBasis(family=family, m=0, domain=domain,
                        evaluator=lambda x: np.zeros((x.shape[0], 0)),
                        degree_vectors=() if family == "legendre_tensor" else None,
                        analytic_gram=np.zeros((0, 0)), analytic_gram_inv=np.zeros((0, 0)))


def make_indicator_basis(m: int, d: int = 1) -> ControlBasis:
    """Normalised stratum indicators on the unit cube.

    The cube is split into ``m + 1`` congruent cells (``k`` per axis with
    ``k**d = m + 1``). For the first ``m`` cells in row-major order,
    h_j = (m + 1) 1{x in cell j} - 1; the last cell is omitted because its
    normalised indicator is minus the sum of the others.
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    domain = Domain.unit_cube(d)
    if m == 0:
        return _empty_basis("indicator_strata", domain)
    k = int(round((m + 1) ** (1.0 / d)))
    if k ** d != m + 1:
        raise ValueError(f"m + 1 = {m + 1} is not a perfect {d}-th power")

    def evaluate(x: np.ndarray) -> np.ndarray:
        idx = np.minimum(np.floor(x * k).astype(np.int64), k - 1)
        cell = np.ravel_multi_index(tuple(idx.T), (k,) * d) if d > 1 else idx[:, 0]
        out = np.full((x.shape[0], m), -1.0)
        hit = cell < m
        out[np.nonzero(hit)[0], cell[hit]] = float(m)
        return out

    gram = (m + 1) * np.eye(m) - np.ones((m, m))
    return ControlBasis(family="indicator_strata", m=m, domain=domain, evaluator=evaluate,
                        analytic_gram=gram,
                        analytic_gram_inv=(np.eye(m) + np.ones((m, m))) / (m + 1),
                        breakpoints=tuple(j / k for j in range(1, k)))


def make_legendre_basis(m: int) -> ControlBasis:
    """Legendre polynomials L_1, ..., L_m on [-1, 1] with L_j(1) = 1."""
    if m < 0:
        raise ValueError("m must be >= 0")
    domain = Domain.symmetric_interval()
    if m == 0:
        return _empty_basis("legendre_1d", domain)

    def evaluate(x: np.ndarray) -> np.ndarray:
        return legendre_values(x[:, 0], m)[:, 1:]

    odd = 2.0 * np.arange(1, m + 1) + 1.0
    return ControlBasis(family="legendre_1d", m=m, domain=domain, evaluator=evaluate,
                        analytic_gram=np.diag(1.0 / odd), analytic_gram_inv=np.diag(odd))


def make_legendre_tensor_basis(m: int, d: int) -> ControlBasis:
    """Orthonormal tensor-product Legendre polynomials on [-1, 1]^d.

    h_j(x) = prod_l sqrt(2 a + 1) L_a(x_l) with a = a_j(l), the degree vectors
    taken from :func:`graded_degree_vectors`. The Gram matrix is the identity.
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    domain = Domain.symmetric_cube(d)
    if m == 0:
        return _empty_basis("legendre_tensor", domain)
    degs = np.array(graded_degree_vectors(m, d), dtype=np.int64)
    top = int(degs.max())
    norms = np.sqrt(2.0 * np.arange(top + 1) + 1.0)

    def evaluate(x: np.ndarray) -> np.ndarray:
        lbar = legendre_values(x, top) * norms  # (N, d, top + 1)
        out = np.ones((x.shape[0], m))
        for ax in range(d):
            out *= lbar[:, ax, degs[:, ax]]
        return out

    return ControlBasis(family="legendre_tensor", m=m, domain=domain, evaluator=evaluate,
                        degree_vectors=tuple(map(tuple, degs.tolist())),
                        analytic_gram=np.eye(m), analytic_gram_inv=np.eye(m))


def make_custom_basis(funcs, domain: Domain, zero_mean: bool = True,
                      spec: QuadratureSpec = DEFAULT_QUADRATURE,
                      breakpoints: Sequence[float] = ()) -> ControlBasis:
    """Wrap user functions as a control basis.

    ``funcs`` is either a sequence of callables ``(N, d) -> (N,)`` or one
    callable ``(N, d) -> (N, m)``. When ``zero_mean`` is false, each function
    is centred by subtracting its quadrature mean.
    """
    if callable(funcs):
        raw = funcs
    else:
        fs = list(funcs)
        if not fs:
            return _empty_basis("custom", domain)

        def raw(x):
            return np.column_stack([np.asarray(f(x), dtype=float).reshape(x.shape[0]) for f in fs])

    probe = np.asarray(raw(np.full((1, domain.dim), 0.5 * (domain.lower + domain.upper))))
    m = probe.shape[1] if probe.ndim == 2 else 1
    if m == 0:
        return _empty_basis("custom", domain)

    def raw2d(x):
        return np.asarray(raw(x), dtype=float).reshape(x.shape[0], m)

    if zero_mean:
        evaluate = raw2d
    else:
        means = np.atleast_1d(quad_expect(raw2d, domain, spec, breakpoints))

        def evaluate(x):
            return raw2d(x) - means

    return ControlBasis(family="custom", m=m, domain=domain, evaluator=evaluate,
                        breakpoints=tuple(breakpoints))


def transform_basis(basis: ControlBasis, A) -> ControlBasis:
    """The basis A h for an ``(m, m)`` matrix ``A``, as a custom family."""
    A = np.asarray(A, dtype=float)
    if A.shape != (basis.m, basis.m):
        raise ValueError("A must be m x m")
    gram = None if basis.analytic_gram is None else A @ basis.analytic_gram @ A.T
    return ControlBasis(family="custom", m=basis.m, domain=basis.domain,
                        evaluator=lambda x: basis(x) @ A.T, analytic_gram=gram,
                        breakpoints=basis.breakpoints)


def gram_inverse(basis: ControlBasis, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> np.ndarray:
    """P(hh')^{-1}; the closed form when available, else a Cholesky inverse."""
    if basis.analytic_gram_inv is not None:
        return np.array(basis.analytic_gram_inv, dtype=float)
    G = gram(basis, spec)
    return linalg.cho_solve(linalg.cho_factor(G), np.eye(basis.m))


def feasible_m(family: str, m: int, d: int = 1) -> int:
    """Largest admissible size <= m; indicator grids need m + 1 = k**d."""
    fam = FAMILY_ALIASES.get(family, family)
    if fam != "indicator_strata" or d == 1 or m <= 0:
        return max(m, 0)
    k = int(round((m + 1) ** (1.0 / d)))
    while k ** d > m + 1:
        k -= 1
    while (k + 1) ** d <= m + 1:
        k += 1
    return k ** d - 1


def make_basis(family: str, m: int, d: int = 1) -> ControlBasis:
    """Build a built-in family by (alias) name."""
    try:
        fam = FAMILY_ALIASES[family]
    except KeyError:
        raise ValueError(f"unknown basis family {family!r}") from None
    if fam == "indicator_strata":
        return make_indicator_basis(m, d)
    if fam == "legendre_1d":
        if d != 1:
            raise ValueError("legendre_1d is one-dimensional; use legendre_tensor")
        return make_legendre_basis(m)
    return make_legendre_tensor_basis(m, d)


def family_domain(family: str, d: int = 1) -> Domain:
    fam = FAMILY_ALIASES.get(family, family)
    return Domain.unit_cube(d) if fam == "indicator_strata" else Domain.symmetric_cube(d)


# ---------------------------------------------------------------------------
# Evaluation and Gram matrices
# ---------------------------------------------------------------------------

def evaluate_basis(basis: ControlBasis, samples: SamplePoints) -> np.ndarray:
    """The ``(n, m)`` matrix H with entries h_j(X_i)."""
    if basis.domain != samples.domain:
        raise ValueError(f"basis lives on {basis.domain}, samples on {samples.domain}")
    return basis(samples.points)


def quadrature_gram(basis: ControlBasis, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> np.ndarray:
    """P(hh') by quadrature, ignoring any analytic form."""
    if basis.m == 0:
        return np.zeros((0, 0))
    nodes, weights = gauss_rule(basis.domain, spec, basis.breakpoints)
    H = basis(nodes)
    G = H.T @ (weights[:, None] * H)
    return 0.5 * (G + G.T)


def check_gram(G: np.ndarray) -> np.ndarray:
    if G.size and np.linalg.eigvalsh(G)[0] < GRAM_EIG_FLOOR:
        raise RankDeficient("Gram matrix has an eigenvalue below 1e-10")
    return G


def gram(basis: ControlBasis, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> np.ndarray:
    """P(hh'), analytic when the family provides it, else by quadrature.

    Raises
    ------
    RankDeficient
        If the smallest eigenvalue is below 1e-10.
    """
    if basis.analytic_gram is not None:
        G = np.array(basis.analytic_gram, dtype=float)
    else:
        G = quadrature_gram(basis, spec)
    return check_gram(G)
