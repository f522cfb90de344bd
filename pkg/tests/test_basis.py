import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from dcipher import expr as ex
from dcipher.basis import BSpline1D, derivative_of_product, eval_test_derivative, make_testing_set
from dcipher.weakform import IntegrationLattice


def _quadratic_bspline(x):
    # textbook cardinal quadratic B-spline on knots 0, 1, 2, 3
    return np.select([(x > 0) & (x <= 1), (x > 1) & (x <= 2), (x > 2) & (x < 3)],
                     [x ** 2 / 2, (-2 * x ** 2 + 6 * x - 3) / 2, (3 - x) ** 2 / 2], 0.0)


def test_quadratic_spline_matches_closed_form():
    x = np.linspace(-0.5, 3.5, 81)
    np.testing.assert_allclose(BSpline1D(0.0, 3.0, 2)(x), _quadratic_bspline(x), atol=1e-14)


@pytest.mark.parametrize("degree", [2, 3, 4])
def test_spline_derivatives_match_finite_differences(degree):
    b = BSpline1D(0.2, 1.4, degree)
    x = np.linspace(0.25, 1.35, 23) + 1e-3  # off the knots
    h = 1e-5
    for nu in range(1, degree):
        fd = (b(x + h, nu - 1) - b(x - h, nu - 1)) / (2 * h)
        np.testing.assert_allclose(b(x, nu), fd, rtol=1e-5, atol=1e-5)


@pytest.mark.parametrize("degree", [2, 3, 5])
def test_spline_vanishes_smoothly_at_support_ends(degree):
    b = BSpline1D(-1.0, 0.5, degree)
    for nu in range(degree):
        assert b(np.array([-1.0, 0.5]), nu) == pytest.approx([0.0, 0.0], abs=1e-12)


def test_exact_norm_agrees_with_adaptive_quadrature():
    b = BSpline1D(0.0, 0.7, 4)
    ref, _ = integrate.quad(lambda x: float(b(np.array(x))) ** 2, 0.0, 0.7, points=b.knots[1:-1],
                            epsabs=1e-14, epsrel=1e-13)
    assert b.l2_norm_squared() == pytest.approx(ref, rel=1e-12)


def test_tiles_follow_row_major_lattice():
    fns = make_testing_set([(0.0, 2.0), (0.0, 1.0)], 5, 2)
    assert [f.support for f in fns[:4]] == [((0.0, 2 / 3), (0.0, 1 / 3)), ((0.0, 2 / 3), (1 / 3, 2 / 3)),
                                           ((0.0, 2 / 3), (2 / 3, 1.0)), ((2 / 3, 4 / 3), (0.0, 1 / 3))]
    assert all(f.smoothness == 2 and f.ndim == 2 for f in fns)


def test_gram_matrix_is_identity_exactly_normalised():
    fns = make_testing_set([(0.0, 2.0)], 6, 2)
    gram = np.empty((6, 6))
    for i, a in enumerate(fns):
        for j, b in enumerate(fns):
            gram[i, j] = integrate.quad(lambda x: float(a([np.array(x)]) * b([np.array(x)])), 0.0, 2.0,
                                        points=np.linspace(0, 2, 25), limit=200, epsabs=1e-13)[0]
    np.testing.assert_allclose(gram, np.eye(6), atol=1e-6)


def test_gram_matrix_is_identity_under_lattice_rule():
    lat = IntegrationLattice(((0.0, 2.0), (0.0, 2.0)), 0.01)
    fns = make_testing_set(lat.domain, 16, 2, rules=lat.rules())
    X = lat.mesh()
    vals = np.stack([f(X).ravel() for f in fns])
    gram = vals @ vals.T * lat.cell_volume
    np.testing.assert_allclose(gram, np.eye(16), atol=1e-6)


def test_integration_by_parts_holds():
    # ∫ u ∂^α φ = (-1)^|α| ∫ ∂^α u φ for u = sin(3t) cos(2x)
    fns = make_testing_set([(0.0, 2.0), (0.0, 2.0)], 9, 2)
    phi = fns[4]
    (t0, t1), (x0, x1) = phi.support
    u = {(0, 0): lambda t, x: np.sin(3 * t) * np.cos(2 * x),
         (1, 0): lambda t, x: 3 * np.cos(3 * t) * np.cos(2 * x),
         (0, 2): lambda t, x: -4 * np.sin(3 * t) * np.cos(2 * x),
         (1, 1): lambda t, x: -6 * np.cos(3 * t) * np.sin(2 * x)}
    for alpha in [(1, 0), (0, 2), (1, 1)]:
        lhs = integrate.dblquad(lambda x, t: u[(0, 0)](t, x) * eval_test_derivative(phi, alpha, (t, x)),
                                t0, t1, x0, x1, epsabs=1e-10)[0]
        rhs = integrate.dblquad(lambda x, t: u[alpha](t, x) * eval_test_derivative(phi, (0, 0), (t, x)),
                                t0, t1, x0, x1, epsabs=1e-10)[0]
        assert (-1) ** sum(alpha) * lhs == pytest.approx(rhs, abs=1e-4)


def test_product_derivative_uses_leibniz_rule():
    phi = make_testing_set([(0.0, 1.0)], 1, 3)[0]
    a = ex.exp(2.0 * ex.var(0))
    x = np.linspace(0.1, 0.9, 9)
    h = 1e-4

    def a_phi(z):
        return np.exp(2 * z) * phi([z])

    fd = (a_phi(x + h) - 2 * a_phi(x) + a_phi(x - h)) / h ** 2
    np.testing.assert_allclose(derivative_of_product(phi, (2,), a, [x]), fd, rtol=1e-5, atol=1e-4)
    np.testing.assert_allclose(derivative_of_product(phi, (1,), ex.const(3.0), [x]), 3 * phi([x], (1,)))


def test_coefficient_must_not_use_fields():
    phi = make_testing_set([(0.0, 1.0)], 1, 2)[0]
    with pytest.raises(ValueError):
        derivative_of_product(phi, (1,), ex.fld(0) * ex.var(0), [np.array([0.5])])


def test_rejects_bad_requests():
    with pytest.raises(ValueError, match="too large"):
        make_testing_set([(0.0, 1.0)], 100, 2, min_width=0.05)
    phi = make_testing_set([(0.0, 1.0)], 2, 1)[0]
    with pytest.raises(ValueError, match="exceeds smoothness"):
        phi([np.array([0.1])], (2,))
    with pytest.raises(ValueError):
        make_testing_set([(1.0, 1.0)], 2, 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.integers(0, 3), st.floats(0.5, 4.0))
def test_supports_are_disjoint_and_inside_domain(count, k, width):
    fns = make_testing_set([(0.0, width)], count, k)
    assert len(fns) == count
    bounds = sorted(f.support[0] for f in fns)
    assert bounds[0][0] == 0.0 and bounds[-1][1] <= width + 1e-12
    for (_, hi), (lo, _) in zip(bounds, bounds[1:]):
        assert hi <= lo + 1e-12
