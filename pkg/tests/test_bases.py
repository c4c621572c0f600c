import itertools

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from cvmc import (RankDeficient, draw_samples, evaluate_basis, feasible_m, gram, gram_inverse, graded_degree_vectors,
                  legendre_values, make_basis, make_custom_basis, make_indicator_basis,
                  make_legendre_basis, make_legendre_tensor_basis, quadrature_gram,
                  transform_basis)
from cvmc.core import quad_expect

from conftest import points


def test_indicator_gram_m2():
    b = make_indicator_basis(2)
    np.testing.assert_array_equal(b.analytic_gram, [[2, -1], [-1, 2]])
    np.testing.assert_allclose(np.linalg.inv(b.analytic_gram), np.array([[2, 1], [1, 2]]) / 3, atol=1e-15)


def test_indicator_m1_value(unit):
    assert evaluate_basis(make_indicator_basis(1), points(unit, [0.2]))[0, 0] == 1.0


def test_indicator_last_cell(unit):
    np.testing.assert_array_equal(evaluate_basis(make_indicator_basis(2), points(unit, [0.9])), [[-1, -1]])


def test_indicator_right_endpoint_in_last_cell(unit):
    np.testing.assert_array_equal(evaluate_basis(make_indicator_basis(3), points(unit, [1.0])), [[-1, -1, -1]])


def test_indicator_gram_m3():
    np.testing.assert_allclose(gram(make_indicator_basis(3)), 4 * np.eye(3) - np.ones((3, 3)))


def test_indicator_requires_perfect_power():
    with pytest.raises(ValueError):
        make_indicator_basis(4, d=2)
    assert make_indicator_basis(8, d=2).m == 8


def test_legendre_gram():
    np.testing.assert_allclose(make_legendre_basis(2).analytic_gram, np.diag([1 / 3, 1 / 5]))
    np.testing.assert_allclose(gram(make_legendre_basis(4)), np.diag([1 / 3, 1 / 5, 1 / 7, 1 / 9]))


def test_legendre_values_known():
    assert legendre_values(np.array(0.5), 2)[2] == pytest.approx(-0.125, abs=1e-15)
    assert legendre_values(np.array(1.0), 5)[5] == pytest.approx(1.0, abs=1e-15)


@given(st.floats(-1, 1), st.integers(0, 25))
@settings(max_examples=60, deadline=None)
def test_recurrence_matches_numpy(x, deg):
    ref = np.polynomial.legendre.legval(x, np.eye(deg + 1)[deg])
    assert legendre_values(np.array([x]), deg)[0, deg] == pytest.approx(ref, abs=1e-12)


def test_legendre_rows(sym):
    np.testing.assert_allclose(evaluate_basis(make_legendre_basis(2), points(sym, [1.0])), [[1.0, 1.0]])
    np.testing.assert_allclose(evaluate_basis(make_legendre_basis(3), points(sym, [0.5])),
                               [[0.5, -0.125, -0.4375]], atol=1e-15)


def test_tensor_degree_vectors():
    assert graded_degree_vectors(3, 2) == [(1, 0), (0, 1), (1, 1)]


@given(st.integers(1, 40), st.integers(1, 4))
@settings(max_examples=50, deadline=None)
def test_degree_vectors_graded(m, d):
    vecs = graded_degree_vectors(m, d)
    assert len(set(vecs)) == m and all(max(v) >= 1 for v in vecs)
    top = [max(v) for v in vecs]
    assert top == sorted(top)
    # every vector of max-degree below the last one's has appeared
    a = top[-1] - 1
    full = [v for v in itertools.product(range(a + 1), repeat=d) if max(v) >= 1]
    assert set(full) <= set(vecs)


def test_tensor_1d_is_normalised_legendre(sym):
    b = make_legendre_tensor_basis(2, 1)
    x = np.linspace(-1, 1, 7)
    L = legendre_values(x, 2)
    np.testing.assert_allclose(b(x[:, None]), L[:, 1:] * np.sqrt([3.0, 5.0]), atol=1e-14)
    np.testing.assert_allclose(quadrature_gram(b), np.eye(2), atol=1e-10)


@pytest.mark.parametrize("m,d", [(3, 2), (8, 2), (7, 3), (26, 3)])
def test_tensor_orthonormal(m, d):
    b = make_legendre_tensor_basis(m, d)
    np.testing.assert_allclose(quadrature_gram(b), np.eye(m), atol=1e-9)


def _all_bases(mmax=30):
    for m in range(1, mmax + 1):
        yield make_indicator_basis(m)
        yield make_legendre_basis(m)
    for m in (3, 8, 15, 24):
        yield make_indicator_basis(m, 2) if int(np.sqrt(m + 1)) ** 2 == m + 1 else make_legendre_tensor_basis(m, 2)
    for m in (1, 5, 12, 30):
        yield make_legendre_tensor_basis(m, 2)
        yield make_legendre_tensor_basis(m, 3)
    yield make_indicator_basis(7, 3)


@pytest.mark.parametrize("basis", list(_all_bases()), ids=lambda b: f"{b.family}-m{b.m}-d{b.domain.dim}")
def test_zero_mean_and_gram_agreement(basis):
    means = quad_expect(basis, basis.domain, breakpoints=basis.breakpoints)
    assert np.max(np.abs(means)) <= 1e-10
    np.testing.assert_allclose(quadrature_gram(basis), basis.analytic_gram, atol=1e-9)


@pytest.mark.parametrize("family,m,d", [("legendre_1d", 3, 1), ("indicator_strata", 3, 1),
                                        ("legendre_tensor", 3, 2)])
def test_empirical_gram_converges(family, m, d):
    b = make_basis(family, m, d)
    n = 10 ** 5
    H = evaluate_basis(b, draw_samples(b.domain, n, 11))
    prods = H[:, :, None] * H[:, None, :]
    se = prods.std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(prods.mean(axis=0) - b.analytic_gram) <= 4 * se + 1e-15)


def test_custom_gram_symbolic(sym):
    t = sp.symbols("t")
    polys = [t, t ** 2 - sp.Rational(1, 3)]
    exact = np.array([[float(sp.integrate(p * q, (t, -1, 1)) / 2) for q in polys] for p in polys])
    np.testing.assert_allclose(exact, [[1 / 3, 0], [0, 4 / 45]], atol=1e-15)
    b = make_custom_basis([lambda x: x[:, 0], lambda x: x[:, 0] ** 2 - 1 / 3], sym)
    np.testing.assert_allclose(gram(b), exact, atol=1e-14)


def test_custom_centring(sym):
    b = make_custom_basis([lambda x: x[:, 0] ** 2], sym, zero_mean=False)
    np.testing.assert_allclose(b(np.array([[0.0], [1.0]]))[:, 0], [-1 / 3, 2 / 3], atol=1e-14)


def test_custom_matrix_callable(unit):
    b = make_custom_basis(lambda x: np.column_stack([x[:, 0] - 0.5, x[:, 0] ** 2 - 1 / 3]), unit)
    assert b.m == 2


def test_empty_bases(unit):
    for b in (make_custom_basis([], unit), make_legendre_basis(0), make_indicator_basis(0)):
        assert b.m == 0
        assert b(np.zeros((4, 1))).shape == (4, 0)


def test_rank_deficient_custom(sym):
    b = make_custom_basis([lambda x: x[:, 0], lambda x: 2 * x[:, 0]], sym)
    with pytest.raises(RankDeficient):
        gram(b)


def test_domain_mismatch(unit):
    with pytest.raises(ValueError):
        evaluate_basis(make_legendre_basis(2), draw_samples(unit, 5, 0))


def test_transform_gram():
    b = make_legendre_basis(3)
    A = np.array([[1.0, 2, 0], [0, 1, 0], [1, 0, 3]])
    t = transform_basis(b, A)
    np.testing.assert_allclose(quadrature_gram(t), A @ b.analytic_gram @ A.T, atol=1e-13)


def test_make_basis_aliases():
    assert make_basis("legendre", 2).family == "legendre_1d"
    assert make_basis("indicator", 2).family == "indicator_strata"
    assert make_basis("tensor", 3, 2).family == "legendre_tensor"
    with pytest.raises(ValueError):
        make_basis("wavelet", 2)
    with pytest.raises(ValueError):
        make_indicator_basis(-1)


@pytest.mark.parametrize("basis", [make_indicator_basis(6), make_indicator_basis(15, 2), make_legendre_basis(9),
                                   make_legendre_tensor_basis(7, 3)], ids=lambda b: f"{b.family}-{b.m}")
def test_closed_form_inverse(basis):
    np.testing.assert_allclose(gram_inverse(basis) @ gram(basis), np.eye(basis.m), atol=1e-12)


def test_inverse_falls_back_to_cholesky(sym):
    b = make_custom_basis([lambda x: x[:, 0], lambda x: x[:, 0] ** 2 - 1 / 3], sym)
    np.testing.assert_allclose(gram_inverse(b), np.diag([3.0, 45 / 4]), atol=1e-10)


@pytest.mark.parametrize("family,m,d,expected", [("indicator", 32, 2, 24), ("indicator", 35, 2, 35),
                                                 ("indicator", 30, 3, 26), ("indicator", 2, 2, 0),
                                                 ("legendre", 7, 1, 7), ("tensor", 5, 2, 5)])
def test_feasible_m(family, m, d, expected):
    assert feasible_m(family, m, d) == expected
