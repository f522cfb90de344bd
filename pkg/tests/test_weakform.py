import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from dcipher import data
from dcipher import expr as ex
from dcipher.basis import knot_divisions, make_testing_set
from dcipher.weakform import (Dictionary, ExtendedDerivative, IntegrationLattice, ablated_design,
                              compute_w, compute_Z, functional_F, mse_loss_ablated, variational_loss)

V, F = ("t", "x"), ("u",)
DOMAIN = ((0.0, 2.0), (0.0, 2.0))


def _u(t, x):
    return np.sin(2 * t + 0.3) * np.cos(1.5 * x)


def _strong(alpha, t, x):
    # ∂^α u for the product above
    dt = [np.sin(2 * t + 0.3), 2 * np.cos(2 * t + 0.3), -4 * np.sin(2 * t + 0.3)][alpha[0]]
    dx = [np.cos(1.5 * x), -1.5 * np.sin(1.5 * x), -2.25 * np.cos(1.5 * x)][alpha[1]]
    return dt * dx


def _on(lattice, f):
    return f(*lattice.mesh())


@pytest.mark.parametrize("alpha", [(1, 0), (0, 1), (0, 2), (1, 1), (2, 0)])
def test_weak_form_agrees_with_strong_form_quadrature(alpha):
    lat = IntegrationLattice.aligned(DOMAIN, 0.005, knot_divisions(9, 2, 2))
    phi = make_testing_set(DOMAIN, 9, 2)[4]
    weak = functional_F(ExtendedDerivative(alpha), _on(lat, _u), phi, lat)
    (t0, t1), (x0, x1) = phi.support
    strong = integrate.dblquad(lambda x, t: _strong(alpha, t, x) * phi([np.array(t), np.array(x)]),
                               t0, t1, x0, x1, epsabs=1e-11)[0]
    assert weak == pytest.approx(strong, abs=1e-4)


def test_coefficient_and_nonlinear_h():
    # a(x) ∂x[u²] against quadrature of a · 2 u u_x · φ
    lat = IntegrationLattice.aligned(DOMAIN, 0.005, knot_divisions(4, 2, 2))
    phi = make_testing_set(DOMAIN, 4, 2)[3]
    E = ExtendedDerivative((0, 1), ex.exp(ex.var(1)), ex.fld(0) * ex.fld(0))
    weak = functional_F(E, _on(lat, _u), phi, lat)
    (t0, t1), (x0, x1) = phi.support
    strong = integrate.dblquad(
        lambda x, t: np.exp(x) * 2 * _u(t, x) * _strong((0, 1), t, x) * phi([np.array(t), np.array(x)]),
        t0, t1, x0, x1, epsabs=1e-11)[0]
    assert weak == pytest.approx(strong, abs=1e-4)


def test_Z_is_stacked_functionals():
    lat = IntegrationLattice(DOMAIN, 0.02)
    testing = make_testing_set(DOMAIN, 4, 2, rules=lat.rules())
    dictionary = [ExtendedDerivative((1, 0)), ExtendedDerivative((0, 2), h=ex.fld(0) * ex.fld(0))]
    fields = [_on(lat, _u), 2 * _on(lat, _u) + 1]
    system = compute_Z(dictionary, fields, testing, lat)
    assert system.Z.shape == (8, 2)
    for d, f in enumerate(fields):
        for s, phi in enumerate(testing):
            for p, E in enumerate(dictionary):
                assert system.Z[d * 4 + s, p] == pytest.approx(functional_F(E, f, phi, lat), rel=1e-12, abs=1e-14)


def test_heat_solution_has_small_weak_residual():
    # u = e^{-θ k² t} cos(k x) solves u_t = θ u_xx, so Z β = 0 for β ∝ (1, -θ)
    theta, k = 0.7, 1.3
    lat = IntegrationLattice.aligned(DOMAIN, 0.01, knot_divisions(16, 2, 2))
    testing = make_testing_set(DOMAIN, 16, 2, rules=lat.rules())
    U = _on(lat, lambda t, x: np.exp(-theta * k * k * t) * np.cos(k * x))
    Z = compute_Z([ExtendedDerivative((1, 0)), ExtendedDerivative((0, 2))], [U], testing, lat).Z
    beta = np.array([1.0, -theta]) / (1 + theta)
    assert variational_loss(beta, Z, np.zeros(16)) < 1e-6 * np.sum(Z ** 2)
    assert variational_loss([0.5, 0.5], Z, np.zeros(16)) > 1e-2


def test_aligned_lattice_puts_knots_on_cell_edges():
    divisions = knot_divisions(16, 2, 2)
    lat = IntegrationLattice.aligned(DOMAIN, 0.01, divisions)
    assert all(w <= 0.01 for w in lat.widths)
    edges = np.concatenate([lat.axes[0] - lat.widths[0] / 2, [2.0]])
    knots = np.linspace(0, 2, divisions + 1)
    assert np.all(np.min(np.abs(knots[:, None] - edges[None, :]), axis=1) < 1e-12)


def test_second_order_column_converges_at_second_order():
    # midpoint error shrinks 4x per halving once knots sit on cell edges
    phi = make_testing_set(DOMAIN, 16, 2)[5]
    (t0, t1), (x0, x1) = phi.support
    exact = integrate.dblquad(lambda x, t: _strong((0, 2), t, x) * phi([np.array(t), np.array(x)]),
                              t0, t1, x0, x1, epsabs=1e-12)[0]
    err = []
    for step in (0.02, 0.01, 0.005):
        lat = IntegrationLattice.aligned(DOMAIN, step, knot_divisions(16, 2, 2))
        err.append(abs(functional_F(ExtendedDerivative((0, 2)), _on(lat, _u), phi, lat) - exact))
    assert err[0] / err[1] > 3 and err[1] / err[2] > 3


def test_w_paths_agree():
    lat = IntegrationLattice(DOMAIN, 0.02)
    testing = make_testing_set(DOMAIN, 9, 2, rules=lat.rules())
    fields = [_on(lat, _u), _on(lat, lambda t, x: t * x)]
    system = compute_Z([ExtendedDerivative((1, 0))], fields, testing, lat)
    for text in ("exp(t) * sin(3 * x)", "u * u - t", "2.5"):
        g = ex.parse(text, V, F)
        np.testing.assert_allclose(system.compute_w(g), compute_w(g, fields, testing, lat), rtol=1e-12, atol=1e-14)


def test_w_is_projection_of_g():
    lat = IntegrationLattice(DOMAIN, 0.01)
    testing = make_testing_set(DOMAIN, 4, 2)
    w = compute_w(ex.parse("t + x", V, F), [np.zeros(lat.shape)], testing, lat)
    for phi, wi in zip(testing, w):
        (t0, t1), (x0, x1) = phi.support
        ref = integrate.dblquad(lambda x, t: (t + x) * phi([np.array(t), np.array(x)]), t0, t1, x0, x1)[0]
        assert wi == pytest.approx(ref, abs=1e-4)


def test_order_beyond_smoothness_is_rejected():
    lat = IntegrationLattice(DOMAIN, 0.05)
    testing = make_testing_set(DOMAIN, 4, 1)
    with pytest.raises(ValueError, match="smoothness"):
        compute_Z([ExtendedDerivative((0, 2))], [np.zeros(lat.shape)], testing, lat)


def test_extended_derivative_validation():
    with pytest.raises(ValueError):
        ExtendedDerivative((0, 0))
    assert ExtendedDerivative((0, 0), allow_zero_order=True).order == 0
    with pytest.raises(ValueError):
        ExtendedDerivative((1, 0), a=ex.fld(0))
    with pytest.raises(ValueError):
        Dictionary([ExtendedDerivative((1, 0)), ExtendedDerivative((1, 0))])
    with pytest.raises(ValueError):
        Dictionary([ExtendedDerivative((1, 0)), ExtendedDerivative((1,))])


@pytest.mark.parametrize("label", ["dt [u]", "dx^2 [(u * u)]", "dt dx [u]", "exp(x) * dx [u]", "u"])
def test_label_round_trip(label):
    E = ExtendedDerivative.parse(label, V, F, allow_zero_order=True)
    assert E.label(V, F) == label
    assert ExtendedDerivative.parse(E.label(V, F), V, F, allow_zero_order=True) == E


@settings(max_examples=50, deadline=None)
@given(st.tuples(st.integers(0, 3), st.integers(0, 3)).filter(lambda a: sum(a) > 0), st.booleans())
def test_label_round_trip_property(alpha, square):
    h = ex.fld(0) * ex.fld(0) if square else ex.fld(0)
    E = ExtendedDerivative(alpha, h=h)
    assert ExtendedDerivative.parse(E.label(V, F), V, F) == E


def test_ablated_design_with_exact_derivatives():
    grid = data.SamplingGrid.uniform(2, 0.0, 2.0, 0.1)
    t, x = grid.mesh()
    sample = data.FieldSample(grid, _u(t, x))

    def exact(sample, hv, alpha):
        return _strong(alpha, *sample.grid.mesh())

    dictionary = [ExtendedDerivative((1, 0)), ExtendedDerivative((0, 2)),
                  ExtendedDerivative((0, 0), allow_zero_order=True)]
    design = ablated_design(dictionary, [sample], exact)
    np.testing.assert_allclose(design[:, 0], _strong((1, 0), t, x).ravel())
    np.testing.assert_allclose(design[:, 2], _u(t, x).ravel())
    # the loss is the plain residual sum of squares
    beta = np.array([0.5, 0.25, 0.25])
    g = ex.parse("t", V, F)
    direct = np.sum((design @ beta - t.ravel()) ** 2)
    assert mse_loss_ablated(beta, g, design, [sample]) == pytest.approx(direct)
