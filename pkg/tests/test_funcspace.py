import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import FS_PHI_0, KINK_INTEGRAL, TWO_PI, parseval_abs2, trapezoid_kink
from tklab.funcspace import (
    Box,
    DomainError,
    FiniteDifferencePotential,
    LaurentAbs2Field,
    LaurentPolynomial,
    LogPotential,
    QuadraticCosinePotential,
    QuadratureRule,
    SumExpPotential,
    catalog,
    direct_sum,
    fd_partial,
    field_catalog,
    make_builtin_potential,
    make_periodic_field,
    torus_quadrature,
)

RNG = np.random.default_rng(7)


def test_fubini_study_value_and_second_derivative():
    phi = make_builtin_potential("fubini_study", 1)
    assert phi([0.0]) == pytest.approx(FS_PHI_0, abs=1e-15)
    assert phi.hessian([0.0])[0, 0] == pytest.approx(1.0, abs=1e-14)


def test_flat_potential_closed_form():
    phi = make_builtin_potential("flat", 1)
    x = np.linspace(-2, 2, 9)[:, None]
    np.testing.assert_allclose(phi(x), np.exp(2 * x[:, 0]), rtol=1e-14)
    np.testing.assert_allclose(phi.hessian(x)[:, 0, 0], 4 * np.exp(2 * x[:, 0]), rtol=1e-14)


def test_flat_cylinder_hessian_is_constant():
    phi = make_builtin_potential("flat_cylinder", 2)
    H = phi.hessian(RNG.uniform(-5, 5, (20, 2)))
    np.testing.assert_allclose(H, np.broadcast_to(2 * np.eye(2), H.shape), atol=1e-15)


def _fd_agreement(name, n, orders):
    """Worst FD-vs-analytic error over 100 points in [-3,3]^n, relative to
    the largest tensor entry at each point (floored at 1)."""
    phi = make_builtin_potential(name, n)
    fd = FiniteDifferencePotential(phi.value, n)
    x = np.random.default_rng(11).uniform(-3, 3, (100, n))
    worst = 0.0
    for order in orders:
        a, b = phi.tensor(order, x).reshape(100, -1), fd.tensor(order, x).reshape(100, -1)
        scale = np.maximum(1.0, np.abs(a).max(axis=1))
        worst = max(worst, float((np.abs(a - b).max(axis=1) / scale).max()))
    return worst


CATALOG = ["flat", "flat_cylinder", "fubini_study", "cosh_neg", "sum_exp"]
_ROUNDOFF = pytest.mark.xfail(strict=True, reason="order 3-4 stencils at the fixed steps lose "
                                                  "~6 digits to rounding for log-sum-exp values")


@pytest.mark.parametrize("name", CATALOG)
@pytest.mark.parametrize("n", [1, 2, 3])
def test_low_order_differences_match_analytic(name, n):
    assert _fd_agreement(name, n, (1, 2)) <= 1e-6


@pytest.mark.parametrize("name,n", [(m, k) for m in CATALOG for k in (1, 2, 3)
                                    if not (m == "fubini_study" and k > 1)]
                         + [pytest.param("fubini_study", k, marks=_ROUNDOFF) for k in (2, 3)])
def test_high_order_differences_match_analytic(name, n):
    assert _fd_agreement(name, n, (3, 4)) <= 1e-6


def test_fd_partial_examples():
    one = np.array([1.0])
    assert fd_partial(lambda p: p[..., 0] ** 2, [2], one) == pytest.approx(2.0, abs=1e-10)
    assert fd_partial(lambda p: np.exp(2 * p[..., 0]), [2], np.zeros(1)) == pytest.approx(4.0, abs=1e-8)
    assert abs(fd_partial(lambda p: np.sin(p[..., 0]), [4], np.zeros(1))) <= 1e-5


def test_fd_partial_on_quartic():
    f = lambda p: p[..., 0] ** 4 - 2 * p[..., 0] ** 2 * p[..., 1] + p[..., 1] ** 3
    p = np.array([0.7, -1.3])
    exact = {(1, 0): 4 * 0.7**3 - 4 * 0.7 * -1.3, (0, 2): 6 * -1.3, (2, 1): -4.0, (4, 0): 24.0,
             (1, 1): -4 * 0.7, (3, 0): 24 * 0.7}
    for alpha, v in exact.items():
        assert fd_partial(f, alpha, p) == pytest.approx(v, rel=1e-8, abs=1e-8)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_log_sum_exp_matches_generic_log_chain(n):
    exps = np.vstack([np.zeros(n), 2 * np.eye(n)])
    stable = make_builtin_potential("fubini_study", n)
    generic = LogPotential(SumExpPotential(np.ones(n + 1), exps))
    x = RNG.uniform(-3, 3, (5, n))
    for order in range(5):
        a = stable.tensor(order, x) if order else stable(x)
        b = generic.tensor(order, x) if order else generic(x)
        np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-12)


def test_log_sum_exp_hessian_far_out():
    # naive e^{2x}/(1+e^{2x})^2 arithmetic loses everything here
    phi = make_builtin_potential("fubini_study", 1)
    x = 20.0
    assert phi.hessian([x])[0, 0] == pytest.approx(4 * np.exp(-2 * x), rel=1e-12)


def test_stable_logdet_agrees_and_survives_deep_rays():
    phi = make_builtin_potential("fubini_study", 2)
    x = RNG.uniform(-2, 2, (10, 2))
    np.testing.assert_allclose(phi.stable_logdet(x), np.linalg.slogdet(phi.hessian(x))[1],
                               atol=1e-12)
    deep = phi.stable_logdet(np.array([30.0, 30.0]))
    # det Hess = 16 p0 p1 p2 with p0 ~ e^-60 / 2, p1 = p2 ~ 1/2
    assert deep == pytest.approx(np.log(16 * np.exp(-60) / 8), rel=1e-10)


def test_cosine_potential_against_differences():
    phi = QuadraticCosinePotential([[2.0, 0.3], [0.3, 1.0]], [0.5, 0.25])
    fd = FiniteDifferencePotential(phi.value, 2)
    x = RNG.uniform(-3, 3, (5, 2))
    for order in (1, 2, 3, 4):
        np.testing.assert_allclose(phi.tensor(order, x), fd.tensor(order, x), rtol=1e-6, atol=1e-6)


def test_scale_and_shift_parameters():
    base = make_builtin_potential("fubini_study", 1)
    phi = make_builtin_potential("fubini_study", 1, {"scale": 3.0, "shift": 0.5})
    assert phi([0.7]) == pytest.approx(3 * base([0.2]), rel=1e-14)
    assert phi.compactifiable


@pytest.mark.parametrize("args", [("nope", 1, None), ("flat", 0, None), ("flat", 1, {"bogus": 1}),
                                  ("sum_exp", 1, {"coeffs": [1.0, -1.0]})])
def test_catalog_rejects_bad_input(args):
    with pytest.raises(ValueError):
        make_builtin_potential(*args)


def test_catalog_lists_expected_signs():
    tags = {e.name: (e.expected_ricci, e.expected_logvol) for e in catalog(2)}
    assert tags["fubini_study"] == ("positive", "strictly-concave")
    assert tags["flat"] == ("zero", "linear")
    assert tags["cosh_neg"] == ("negative", "strictly-convex")


def test_direct_sum_is_block_diagonal():
    phi = direct_sum(make_builtin_potential("fubini_study", 1), make_builtin_potential("flat", 1))
    H = phi.hessian([0.0, 0.0])
    np.testing.assert_allclose(H, [[1.0, 0.0], [0.0, 4.0]], atol=1e-14)


# fields


def test_real_part_of_monomial():
    f = make_periodic_field({"kind": "laurent_re", "coeffs": [1.0], "exponents": [[2]]})
    x, y = RNG.uniform(-2, 2, (10, 1)), RNG.uniform(0, TWO_PI, (10, 1))
    np.testing.assert_allclose(f(x, y), np.exp(2 * x[:, 0]) * np.cos(2 * y[:, 0]), atol=1e-13)


def test_modulus_squared_is_y_independent():
    f = make_periodic_field({"kind": "laurent_abs2", "coeffs": [1.0], "exponents": [[1]]})
    x = np.full((5, 1), 0.3)
    y = np.linspace(0, TWO_PI, 5)[:, None]
    np.testing.assert_allclose(f(x, y), np.exp(0.6), rtol=1e-14)


def test_log_modulus_of_coordinate_is_pluriharmonic():
    f = make_periodic_field({"kind": "laurent_logabs", "coeffs": [1.0], "exponents": [[1, 0]],
                             "zero_free_box": [[-5, 5], [-5, 5]]})
    x, y = RNG.uniform(-2, 2, (10, 2)), RNG.uniform(0, TWO_PI, (10, 2))
    np.testing.assert_allclose(f(x, y), x[:, 0], atol=1e-14)
    assert np.abs(f.hessian(x, y)).max() < 1e-12


def test_log_modulus_refuses_points_outside_declared_box():
    f = make_periodic_field({"kind": "laurent_logabs", "coeffs": [2.0, 1.0], "exponents": [[0], [1]],
                             "zero_free_box": [[-5, 0.5]]})
    with pytest.raises(DomainError):
        f(np.array([[1.0]]), np.array([[0.0]]))


def test_unknown_field_kind():
    with pytest.raises(ValueError):
        make_periodic_field({"kind": "spline"})


@pytest.mark.parametrize("n", [1, 2])
def test_catalog_field_derivatives_match_differences(n):
    x, y = RNG.uniform(-1, 1, (4, n)), RNG.uniform(0, TWO_PI, (4, n))
    p = np.concatenate([x, y], axis=-1)
    for e in field_catalog(n):
        f = lambda q, e=e: e.field(q[..., :n], q[..., n:])
        for a in range(2 * n):
            for b in range(a, 2 * n):
                alpha = np.zeros(2 * n, dtype=int)
                alpha[a] += 1
                alpha[b] += 1
                np.testing.assert_allclose(e.field.derivative((a, b), x, y), fd_partial(f, alpha, p),
                                           rtol=1e-6, atol=1e-6, err_msg=e.name)


# quadrature


def test_constant_integrates_to_torus_volume():
    val = torus_quadrature(lambda x, y: np.ones(np.broadcast_shapes(x.shape, y.shape)[:-1]),
                           np.zeros(2), QuadratureRule(8, 2))
    assert val == pytest.approx(TWO_PI**2, rel=1e-15)


@pytest.mark.parametrize("k", [1, 3, 7])
def test_monomials_below_nyquist_integrate_exactly(k):
    rule = QuadratureRule(16, 1)
    for kind in ("laurent_re", "laurent_im"):
        f = make_periodic_field({"kind": kind, "coeffs": [1.0], "exponents": [[k]]})
        assert abs(torus_quadrature(f, np.zeros(1), rule, refine=False)) <= 1e-12


def test_kink_integrand_matches_trapezoid_closed_form():
    f = lambda x, y: np.abs(1 + np.exp(1j * y[..., 0]))
    for N in (8, 64, 1024):
        got = torus_quadrature(f, np.zeros(1), QuadratureRule(N, 1), refine=False)
        assert got == pytest.approx(trapezoid_kink(N), rel=1e-13)


@pytest.mark.xfail(strict=True, reason="kinked integrand: trapezoid error O(N^-2) is 6e-6 at the "
                                       "1024-node cap")
def test_kink_integrand_within_1e9():
    f = lambda x, y: np.abs(1 + np.exp(1j * y[..., 0]))
    assert abs(torus_quadrature(f, np.zeros(1)) - KINK_INTEGRAL) <= 1e-9


def test_rule_validation():
    with pytest.raises(ValueError):
        QuadratureRule(12, 1)
    assert QuadratureRule.max_for(1) == 1024
    assert QuadratureRule.max_for(3) == 128
    rule = QuadratureRule(4, 2)
    assert rule.nodes.shape == (16, 2)
    assert rule.weight == pytest.approx((TWO_PI / 4) ** 2)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(-2, 2), st.integers(-2, 2),
                          st.floats(-2, 2, allow_nan=False), st.floats(-2, 2, allow_nan=False)),
                min_size=1, max_size=4, unique_by=lambda t: (t[0], t[1])),
       st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_average_of_modulus_squared_is_parseval(terms, x1, x2):
    coeffs = [[re, im] for _, _, re, im in terms]
    exps = [[a, b] for a, b, _, _ in terms]
    f = LaurentAbs2Field(LaurentPolynomial(coeffs, exps))
    x = np.array([x1, x2])
    exact = parseval_abs2([complex(re, im) for re, im in coeffs], exps, x)
    got = torus_quadrature(f, x) / TWO_PI**2
    assert got == pytest.approx(exact, rel=1e-10, abs=1e-12)


# boxes


def test_box_grid_is_lexicographic():
    box = Box.parse(["0:1:1", "0:1:1"], 2)
    np.testing.assert_array_equal(box.grid(), [[0, 0], [0, 1], [1, 0], [1, 1]])


@pytest.mark.parametrize("spec", [["1:0:0.1"], ["0:1:0"], ["0:1"], ["a:b:c"]])
def test_box_rejects_malformed_ranges(spec):
    with pytest.raises(ValueError):
        Box.parse(spec, 1)


def test_fd_stencil_outside_domain():
    with pytest.raises(DomainError):
        fd_partial(np.sin, [2], np.array([0.0]), h=0.1, lower=[0.0])


@settings(max_examples=30, deadline=None)
@given(st.floats(-2, 2), st.integers(1, 4))
def test_fd_partial_on_exponential(x, order):
    got = fd_partial(lambda p: np.exp(p[..., 0]), [order], np.array([x]))
    assert got == pytest.approx(np.exp(x), rel=1e-6)
