import numpy as np
import pytest

from dcipher import data
from dcipher.basis import knot_divisions, make_testing_set
from dcipher.experiments import EXPERIMENTS, _profile, get_experiment, slm_dictionary
from dcipher.weakform import IntegrationLattice, compute_Z

GENERATED = [n for n, e in EXPERIMENTS.items() if e.truth is not None and not n.startswith("slm_q")]


def _fields_on(exp, lattice, n_samples=2):
    if exp.name == "slm":
        # the stored lattice does not refine this one; use the closed form
        profiles = [_profile(np.random.SeedSequence([0, d, 0]), lo=-2.0, hi=2.0) for d in range(n_samples)]
        return [data.slm_solution(exp.theta["theta1"], p)(*lattice.mesh()) for p in profiles]
    axes = lattice.axes
    grid = data.SamplingGrid(tuple(a[0] for a in axes), tuple(a[-1] for a in axes), lattice.widths)
    opts = {"dt": 1e-3, "dx": 1e-3} if exp.name == "burgers" else {}
    out = []
    for d in range(n_samples):
        truth = exp.generate_truth(0, d, **opts)
        assert np.all(np.abs(np.asarray(truth.grid.step) - 0.005) < 1e-12)
        out.append(truth.restrict(grid).values)
    return out


@pytest.mark.parametrize("name", GENERATED)
def test_true_equation_has_small_weak_residual(name):
    exp = get_experiment(name)
    Q = exp.build_dictionary()
    K = max(1, Q.max_order)
    lat = IntegrationLattice.aligned(exp.domain, exp.integration_step, knot_divisions(exp.n_testing, exp.ndim, K))
    testing = make_testing_set(lat.domain, exp.n_testing, K, rules=lat.rules())
    system = compute_Z(Q, _fields_on(exp, lat), testing, lat)
    residual = system.Z @ exp.beta_star() - system.compute_w(exp.g_star())
    scale = np.linalg.norm(system.Z, axis=0).max()
    assert np.linalg.norm(residual) < 2e-3 * scale
    # a wrong β leaves a much larger residual
    wrong = exp.beta_star().copy()
    wrong[np.argmax(np.abs(wrong))] *= -1
    assert np.linalg.norm(system.Z @ wrong - system.compute_w(exp.g_star())) > 10 * np.linalg.norm(residual)


@pytest.mark.parametrize("name", sorted(EXPERIMENTS))
def test_targets_are_normalised_and_fit_the_dictionary(name):
    exp = get_experiment(name)
    beta = exp.beta_star()
    assert np.abs(beta).sum() == pytest.approx(1.0)
    assert len(beta) == len(exp.build_dictionary())


def test_slm_dictionaries_are_nested():
    sizes = [len(slm_dictionary(k)) for k in range(1, 11)]
    assert sizes == list(range(2, 12))
    assert all(slm_dictionary(k) == slm_dictionary(k + 1)[:-1] for k in range(1, 10))
    with pytest.raises(ValueError):
        slm_dictionary(11)


def test_generation_is_deterministic_and_recorded():
    exp = get_experiment("oscillator")
    a = exp.generate(7, noise_ratio=0.1, n_samples=2)
    b = exp.generate(7, noise_ratio=0.1, n_samples=2)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a.samples, b.samples))
    assert a.provenance["seed"] == 7 and a.provenance["noise_ratio"] == 0.1
    assert a.provenance["variables"] == ["t"] and a.grid.step == (0.1,)
    assert not np.array_equal(a.samples[0].values, a.samples[1].values)


def test_unknown_and_import_only_equations():
    with pytest.raises(KeyError):
        get_experiment("navier_stokes")
    with pytest.raises(ValueError, match="import"):
        get_experiment("kuramoto_sivashinsky").generate(0)
    assert get_experiment("heat", grid_step=0.1).grid_step == 0.1
