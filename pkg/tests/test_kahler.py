import numpy as np
import pytest

from oracles import cosh_ricci, fs_h
from tklab.funcspace import (
    Box,
    FiniteDifferencePotential,
    LaurentAbs2Field,
    LaurentPolynomial,
    catalog,
    direct_sum,
    make_builtin_potential,
    make_periodic_field,
)
from tklab.kahler import (
    DensityField,
    NotKahlerError,
    classify_ricci,
    metric_at,
    ricci_form,
    ricci_general,
    ricci_levi_embedding,
    ricci_potential,
)

RNG = np.random.default_rng(5)


def pot(name, n=1, **params):
    return make_builtin_potential(name, n, params or None)


def test_metric_examples():
    for x in (-1.0, 0.0, 0.8):
        m = metric_at(pot("flat"), [x])
        assert m.h[0, 0] == pytest.approx(np.exp(2 * x), rel=1e-14)
        assert m.H == pytest.approx(np.exp(2 * x), rel=1e-13)
    m = metric_at(pot("fubini_study"), [0.0])
    assert m.h[0, 0] == pytest.approx(0.25, abs=1e-15) and m.H == pytest.approx(0.25, abs=1e-15)
    for n in (1, 2, 3):
        m = metric_at(pot("flat_cylinder", n), RNG.uniform(-3, 3, n))
        np.testing.assert_allclose(m.h, 0.5 * np.eye(n), atol=1e-15)
        assert m.H == pytest.approx(2.0**-n, rel=1e-13)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_determinant_recomputes(n):
    for e in catalog(n):
        m = metric_at(e.potential, RNG.uniform(-3, 3, (10, n)))
        np.testing.assert_allclose(m.H, np.linalg.det(m.h), rtol=1e-12)


def test_metric_refuses_non_kahler_points():
    with pytest.raises(NotKahlerError) as err:
        metric_at(pot("fubini_study", scale=-1.0), [0.0])
    assert err.value.eigenvalue < 0


def test_ricci_potential_examples():
    x = np.linspace(-2, 2, 5)[:, None]
    np.testing.assert_allclose(ricci_potential(pot("flat"), x), -2 * x[:, 0], atol=1e-14)
    np.testing.assert_allclose(ricci_potential(pot("flat_cylinder"), x), np.log(2.0), rtol=1e-14)
    assert ricci_potential(pot("fubini_study"), [0.0]) == pytest.approx(np.log(4.0), abs=1e-14)


def test_ricci_form_examples():
    x = np.linspace(-3, 3, 13)[:, None]
    np.testing.assert_allclose(ricci_form(pot("flat"), x).R, 0.0, atol=1e-12)
    fs = ricci_form(pot("fubini_study"), x).R[:, 0, 0]
    np.testing.assert_allclose(fs, 2 * fs_h(x[:, 0]), rtol=1e-8)
    assert ricci_form(pot("fubini_study"), [0.0]).R[0, 0] == pytest.approx(0.5, abs=1e-14)
    np.testing.assert_allclose(ricci_form(pot("cosh_neg"), x).R[:, 0, 0], cosh_ricci(x[:, 0]),
                               rtol=1e-10)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_ricci_symmetric_and_flat_vanishes(n):
    x = RNG.uniform(-3, 3, (20, n))
    for e in catalog(n):
        R = ricci_form(e.potential, x).R
        np.testing.assert_array_equal(R, np.swapaxes(R, -1, -2))
    assert np.abs(ricci_form(pot("flat", n), x).R).max() <= 1e-8


@pytest.mark.parametrize("n", [1, 2])
def test_finite_difference_ricci_fallback(n):
    x = RNG.uniform(-2, 2, (5, n))
    for e in catalog(n):
        fd = FiniteDifferencePotential(e.potential.value, n)
        np.testing.assert_allclose(ricci_form(fd, x).R, ricci_form(e.potential, x).R, atol=1e-4)


def test_product_ricci_is_block_diagonal():
    a, b = pot("fubini_study"), pot("cosh_neg")
    phi = direct_sum(a, b)
    x = RNG.uniform(-2, 2, (10, 2))
    R = ricci_form(phi, x).R
    np.testing.assert_allclose(R[:, 0, 0], ricci_form(a, x[:, :1]).R[:, 0, 0], atol=1e-9)
    np.testing.assert_allclose(R[:, 1, 1], ricci_form(b, x[:, 1:]).R[:, 0, 0], atol=1e-9)
    np.testing.assert_allclose(R[:, 0, 1], 0.0, atol=1e-9)


def test_translation_moves_ricci():
    a = np.array([0.7, -0.4])
    base, moved = pot("fubini_study", 2), pot("fubini_study", 2, shift=a.tolist())
    x = RNG.uniform(-2, 2, (10, 2))
    np.testing.assert_allclose(ricci_form(moved, x + a).R, ricci_form(base, x).R, atol=1e-9)


@pytest.mark.parametrize("name,tag", [("flat", "zero"), ("flat_cylinder", "zero"),
                                      ("fubini_study", "positive"), ("cosh_neg", "negative")])
def test_classify_examples(name, tag):
    assert classify_ricci(pot(name), Box.cube(-3, 3, 0.05, 1)).tag == tag


def test_classify_catalog_tags_in_two_dimensions():
    box = Box.cube(-3, 3, 0.25, 2)
    for e in catalog(2):
        assert classify_ricci(e.potential, box).tag == e.expected_ricci, e.name


def test_ricci_general_examples():
    x, y = RNG.uniform(-2, 2, (8, 1)), RNG.uniform(0, 2 * np.pi, (8, 1))
    exp2x = make_periodic_field({"kind": "laurent_abs2", "coeffs": [1.0], "exponents": [[1]]})
    assert np.abs(ricci_general(exp2x, x, y).matrix).max() < 1e-12
    # |1 + e^w|^2 has no zeros for x < 0
    H = LaurentAbs2Field(LaurentPolynomial([1.0, 1.0], [[0], [1]]))
    xs = RNG.uniform(-3, -0.5, (8, 1))
    assert np.abs(ricci_general(H, xs, y).matrix).max() < 1e-9


@pytest.mark.parametrize("n", [1, 2, 3])
def test_ricci_general_of_density_matches_ricci_form(n):
    x, y = RNG.uniform(-2, 2, (6, n)), RNG.uniform(0, 2 * np.pi, (6, n))
    for e in catalog(n):
        L = ricci_general(DensityField(e.potential), x, y).matrix
        np.testing.assert_allclose(L, ricci_levi_embedding(ricci_form(e.potential, x).R), atol=1e-6)
