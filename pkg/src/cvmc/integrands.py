"""Built-in integrand corpus with closed-form means where available.

Multivariate versions of the one-dimensional integrands act coordinatewise
and are summed (``exp`` multiplies, which is the same as exp of the sum).
"""

from __future__ import annotations

import math

import numpy as np

from .bases import ControlBasis
from .core import Domain, Integrand

CORPUS = ("const", "linear", "square", "exp", "product_exp", "abs_shift", "step", "runge")


def _exp_mean_1d(domain: Domain) -> float:
    return math.e - 1.0 if domain.lower == 0.0 else math.sinh(1.0)


def _abs_shift_mean_1d(domain: Domain) -> float:
    # E|X - 1/3| for X uniform on the domain
    return 5.0 / 18.0 if domain.lower == 0.0 else 5.0 / 9.0


def make_step(u: float, domain: Domain) -> Integrand:
    """sum_l 1{x_l >= u}."""
    d = domain.dim
    p = min(max((domain.upper - u) / domain.width, 0.0), 1.0)
    return Integrand(f"step:{u:g}", lambda x: np.sum(x >= u, axis=1).astype(float),
                     true_mean=d * p, breakpoints=(float(u),))


def make_affine(a: float, b, basis: ControlBasis) -> Integrand:
    """a + sum_j b_j h_j; its mean is exactly ``a``."""
    b = np.asarray(b, dtype=float)
    if b.size > basis.m:
        raise ValueError(f"{b.size} coefficients for a basis with m={basis.m}")
    coef = np.zeros(basis.m)
    coef[:b.size] = b
    return Integrand("affine", lambda x: a + basis(x) @ coef, true_mean=float(a),
                     breakpoints=basis.breakpoints)


def get_integrand(spec: str, domain: Domain, basis: ControlBasis = None) -> Integrand:
    """Look up an integrand by id.

    Parametrised ids: ``const:c``, ``step:u`` and ``affine:a,b1,b2,...``
    (the latter needs ``basis``).
    """
    name, _, arg = str(spec).partition(":")
    d = domain.dim
    lo = domain.lower
    if name == "const":
        c = float(arg) if arg else 1.0
        return Integrand(spec, lambda x: np.full(x.shape[0], c), true_mean=c)
    if name == "linear":
        return Integrand(name, lambda x: x.sum(axis=1), true_mean=d * 0.5 * (lo + domain.upper))
    if name == "square":
        return Integrand(name, lambda x: (x * x).sum(axis=1), true_mean=d / 3.0)
    if name in ("exp", "product_exp"):
        return Integrand(name, lambda x: np.exp(x.sum(axis=1)), true_mean=_exp_mean_1d(domain) ** d)
    if name == "abs_shift":
        return Integrand(name, lambda x: np.abs(x - 1.0 / 3.0).sum(axis=1),
                         true_mean=d * _abs_shift_mean_1d(domain), breakpoints=(1.0 / 3.0,))
    if name == "step":
        return make_step(float(arg) if arg else 0.5, domain)
    if name == "runge":
        mean = math.atan(5.0) / 5.0 if d == 1 else None
        return Integrand(name, lambda x: 1.0 / (1.0 + 25.0 * (x * x).sum(axis=1)), true_mean=mean)
    if name == "affine":
        if basis is None:
            raise ValueError("affine integrands need a basis")
        vals = [float(v) for v in arg.split(",") if v.strip()] if arg else [0.0]
        return make_affine(vals[0], vals[1:], basis)
    raise ValueError(f"unknown integrand {spec!r}; choose from {', '.join(CORPUS)} or affine:a,b...")
