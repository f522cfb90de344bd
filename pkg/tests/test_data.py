import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import solve_ivp

from dcipher import data


def _at(sample, t):
    """Row of a (t, x) sample at time t."""
    k = int(round((t - sample.grid.start[0]) / sample.grid.step[0]))
    return sample.values[k, :, 0]


def test_heat_cosine_mode_decays_at_the_analytic_rate():
    theta = 0.8
    truth = data.solve_heat(theta, u0=lambda x: np.cos(np.pi * x / 2))
    x = truth.grid.axes[1]
    for t in (0.5, 1.0, 2.0):
        exact = np.exp(-theta * (np.pi / 2) ** 2 * t) * np.cos(np.pi * x / 2)
        np.testing.assert_allclose(_at(truth, t), exact, atol=2e-3)


def test_heat_constant_source_lifts_the_mean():
    truth = data.solve_heat(0.5, source=lambda t: 2.0 * math.exp(-t), u0=lambda x: 1.0 + 0 * x)
    for t in (0.5, 2.0):
        # spatially constant solution 1 + 2(1 - e^{-t})
        np.testing.assert_allclose(_at(truth, t), 1 + 2 * (1 - math.exp(-t)), atol=2e-3)


def test_wave_standing_mode_matches_dalembert():
    theta = 1.7
    c = math.sqrt(theta)
    truth = data.solve_wave(theta, u0=lambda x: np.sin(np.pi * x / 2))
    x = truth.grid.axes[1]
    for t in (0.3, 1.0, 2.0):
        # half sum of left and right travelling copies of the odd extension
        exact = 0.5 * (np.sin(np.pi * (x - c * t) / 2) + np.sin(np.pi * (x + c * t) / 2))
        np.testing.assert_allclose(_at(truth, t), exact, atol=2e-4)


def test_wave_constant_source_is_quadratic_in_time():
    truth = data.solve_wave(1.0, source=lambda t: 3.0, u0=lambda x: 0 * x, X=2.0)
    x = truth.grid.axes[1]
    middle = np.abs(x - 1.0) < 0.2  # ends are pinned; the centre feels no boundary until t ~ 0.8
    np.testing.assert_allclose(_at(truth, 0.5)[middle], 1.5 * 0.25, atol=1e-6)


def _burgers(step, u0):
    return data.solve_burgers(0.1, u0=u0, T=0.4, dt=step, dx=step, store_step=0.04)


def test_burgers_is_second_order():
    u0 = lambda x: np.sin(np.pi * x) + 0.5 * x  # noqa: E731
    coarse, mid, fine = (_burgers(h, u0).values for h in (0.02, 0.01, 0.005))
    e1 = np.max(np.abs(coarse - mid))
    e2 = np.max(np.abs(mid - fine))
    assert 3.0 < e1 / e2 < 5.0


def test_burgers_travelling_front():
    nu, a, c = 0.1, 1.0, 0.2

    def exact(t, x):
        return c - a * np.tanh(a * (x - 1.0 - c * t) / (2 * nu))

    truth = data.solve_burgers(nu, u0=lambda x: exact(0.0, x), T=0.4, dt=1e-3, dx=1e-3, store_step=0.01)
    x = truth.grid.axes[1]
    np.testing.assert_allclose(_at(truth, 0.4), exact(0.4, x), atol=2e-3)


def test_burgers_reports_nonconvergence():
    with pytest.raises(data.NonConvergenceError):
        data.solve_burgers(0.01, u0=lambda x: 50 * np.sin(np.pi * x), T=0.02, dt=0.01, dx=0.01,
                           store_step=0.01, max_iter=2)


@pytest.mark.parametrize("theta", [(0.5, 4.0, 5.0, 3.0), (1.3, 2.0, 1.0, 2.0), (0.1, 3.0, 2.0, 2.5)])
def test_oscillator_matches_numerical_integration(theta):
    z, w, f, k = theta
    u0, v0 = 0.7, -1.2
    sol = data.solve_oscillator(theta, u0, v0)
    t = sol.grid.axes[0]
    ref = solve_ivp(lambda s, y: [y[1], f * np.sin(k * s) - 2 * z * w * y[1] - w ** 2 * y[0]],
                    (0, 2), [u0, v0], t_eval=t, rtol=1e-11, atol=1e-12, method="DOP853")
    np.testing.assert_allclose(sol.values[:, 0], ref.y[0], atol=1e-8)


def test_slm_closed_form_solves_the_equation():
    theta = 1.5
    u = data.slm_solution(theta, lambda s: np.exp(-s ** 2))
    t, a = np.meshgrid(np.linspace(0.1, 1.9, 7), np.linspace(0.1, 1.9, 7), indexing="ij")
    h = 1e-5
    ut = (u(t + h, a) - u(t - h, a)) / (2 * h)
    ua = (u(t, a + h) - u(t, a - h)) / (2 * h)
    np.testing.assert_allclose(ut + ua, -2 * np.exp(theta * a) * u(t, a), rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(u(0.0, a), np.exp(-a ** 2))


def test_slm_marching_matches_closed_form():
    theta, u0 = 1.5, (lambda s: np.exp(-(s - 0.3) ** 2))
    marched = data.solve_slm(theta, u0)
    exact = data.slm_solution(theta, u0)(*marched.grid.mesh())
    np.testing.assert_allclose(marched.values[..., 0], exact, atol=1e-10)


def test_slm_with_custom_mortality():
    marched = data.solve_slm(0.0, lambda s: np.ones_like(np.asarray(s, float)), mortality=lambda s: 1.0 + 0 * s)
    t = marched.grid.mesh()[0]
    np.testing.assert_allclose(marched.values[..., 0], np.exp(-t), atol=1e-12)


def test_sampling_grid_axes_and_spec():
    g = data.SamplingGrid((0.0, -1.0), (2.0, 1.0), (0.13, 0.5))
    assert g.shape == (16, 5)
    assert g.axes[0][-1] == pytest.approx(1.95)
    assert data.SamplingGrid.from_spec(g.spec()) == g
    with pytest.raises(ValueError):
        data.SamplingGrid((0.0,), (1.0,), (0.0,))
    with pytest.raises(ValueError):
        data.SamplingGrid.from_spec("0:1")


def test_truth_restricts_onto_coarser_grids_exactly():
    truth = data.solve_heat(1.0, u0=lambda x: np.cos(np.pi * x / 2))
    grid = data.SamplingGrid.uniform(2, 0.0, 2.0, 0.07)
    sub = truth.restrict(grid)
    k = np.rint(grid.axes[1] / 0.005).astype(int)
    np.testing.assert_array_equal(sub.values[0, :, 0], truth.values[0, k, 0])


def test_observe_is_deterministic_and_scaled():
    truth = data.solve_heat(1.0, u0=lambda x: np.cos(np.pi * x / 2))
    grid = data.SamplingGrid.uniform(2, 0.0, 2.0, 0.02)
    a = data.observe(truth, grid, 0.1, seed=[3, 1])
    b = data.observe(truth, grid, 0.1, seed=[3, 1])
    c = data.observe(truth, grid, 0.1, seed=[4, 1])
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    clean = truth.restrict(grid).values
    eps = a.values - clean
    assert eps.std() == pytest.approx(0.1 * clean.std(), rel=0.05)
    np.testing.assert_array_equal(data.observe(truth, grid, 0.0, seed=0).values, clean)
    with pytest.raises(ValueError):
        data.observe(truth, grid, -0.1, seed=0)


def test_initial_profile_is_reproducible_and_interpolates():
    p = data.sample_initial_profile(0.4, 1.0, (0.0, 2.0), seed=5)
    q = data.sample_initial_profile(0.4, 1.0, (0.0, 2.0), seed=5)
    x = np.linspace(0, 2, 101)
    np.testing.assert_array_equal(p(x), q(x))
    anchors = data.sample_gp_initial_condition(0.4, 1.0, p.anchors, 5)
    np.testing.assert_allclose(p(p.anchors), anchors, atol=1e-4)  # small nugget
    assert np.all(data.sample_initial_profile(0.4, 0.0, seed=1)(x) == 0)


def test_dataset_requires_shared_grid():
    g1 = data.SamplingGrid((0.0,), (1.0,), (0.5,))
    g2 = data.SamplingGrid((0.0,), (1.0,), (0.25,))
    with pytest.raises(ValueError):
        data.Dataset([data.FieldSample(g1, np.zeros(3)), data.FieldSample(g2, np.zeros(5))])
    with pytest.raises(ValueError):
        data.Dataset([])
    with pytest.raises(ValueError):
        data.FieldSample(g1, np.array([0.0, np.nan, 1.0]))


@settings(max_examples=30, deadline=None)
@given(values=arrays(np.float64, (4, 3, 2), elements=st.floats(-1e6, 1e6)))
def test_dataset_text_round_trip_is_lossless(values, tmp_path_factory):
    grid = data.SamplingGrid((0.0, 1.5), (0.3, 2.5), (0.1, 0.5))
    ds = data.Dataset([data.FieldSample(grid, values), data.FieldSample(grid, -values)],
                      {"equation": "toy", "noise_ratio": 0.05, "theta": [1.0, 2.5]})
    out = tmp_path_factory.mktemp("ds")
    data.write_dataset(out, ds, ("t", "x"), ("u1", "u2"))
    back = data.read_dataset(out)
    assert len(back) == 2 and back.grid == grid
    np.testing.assert_array_equal(back.samples[0].values, values)
    assert back.provenance["equation"] == "toy"
    assert back.provenance["theta"] == [1.0, 2.5]
    assert back.provenance["fields"] == ["u1", "u2"]


def test_read_rejects_malformed_files(tmp_path):
    (tmp_path / "sample_000.csv").write_text("t,u\n0.0,1.0\n")
    with pytest.raises(ValueError, match="grid"):
        data.read_dataset(tmp_path)
    with pytest.raises(FileNotFoundError):
        data.read_dataset(tmp_path / "nothing")
