import csv

import numpy as np
import pytest
from sklearn.base import clone

from dcipher import data, pipeline
from dcipher import expr as ex
from dcipher.collie import RankDeficiencyError
from dcipher.experiments import get_experiment
from dcipher.pipeline import (AblatedDCipher, DCipher, align_sign, beta_rmse, run_experiment,
                              success_indicator, summarize)
from dcipher.symreg import GPConfig

TINY = GPConfig(population_size=40, generations=2)


@pytest.fixture(scope="module")
def oscillator_data():
    return get_experiment("oscillator").generate(0, n_samples=3)


def _oscillator(**kw):
    exp = get_experiment("oscillator")
    params = dict(dictionary=exp.build_dictionary(), n_testing=10, domain=exp.domain, integration_step=0.01,
                  gp_config=TINY)
    params.update(kw)
    return DCipher(**params)


def test_beta_rmse_examples():
    heat = np.array([0.0, 1.0, 0.0, 0.0, -0.25, 0.0])
    target = heat / 1.25
    assert beta_rmse(target, heat) == 0.0
    assert beta_rmse(-target, heat) == 0.0
    rng = np.random.default_rng(0)
    beta = rng.standard_normal(6)
    beta /= np.abs(beta).sum()
    sign = 1 if beta[1] > 0 else -1
    assert beta_rmse(beta, heat) == pytest.approx(np.sqrt(np.mean((sign * beta - target) ** 2)), rel=1e-14)


def test_align_sign():
    aligned, sign = align_sign([0.2, -0.8], [-1.0, 4.0])
    assert sign == -1 and list(aligned) == [-0.2, 0.8]


def test_success_indicator():
    V, F = ("t",), ("u",)
    target = ex.parse("5*sin(3*t)", V, F)
    assert success_indicator(ex.parse("2*sin(2.9*t + 0.1)", V, F), target, V, F) == 1
    assert success_indicator(ex.parse("t*t", V, F), target, V, F) == 0


def test_weak_system_is_built_once(oscillator_data, monkeypatch):
    calls = []
    real = pipeline.compute_Z

    def counting(*args, **kwargs):
        calls.append(1)
        return real(*args, **kwargs)

    monkeypatch.setattr(pipeline, "compute_Z", counting)
    est = _oscillator().fit(oscillator_data)
    assert len(calls) == 1
    assert len(est.result_.history) == TINY.generations


def test_reported_loss_is_recomputable(oscillator_data):
    est = _oscillator().fit(oscillator_data)
    res = est.result_
    direct = est.loss(res.beta, res.g)
    assert res.loss == pytest.approx(direct, rel=1e-10, abs=1e-12)
    assert abs(np.abs(res.beta).sum() - 1) < 1e-10
    w = est.system_.compute_w(res.g)
    assert res.loss == pytest.approx(float(np.sum((est.system_.Z @ res.beta - w) ** 2)), rel=1e-10, abs=1e-12)


def test_fixed_g_recovers_oscillator_coefficients(oscillator_data):
    exp = get_experiment("oscillator")
    est = _oscillator(search=False, fixed_g=exp.g_star()).fit(oscillator_data)
    assert beta_rmse(est.beta_, exp.beta_star()) < 0.05


def test_estimator_params_round_trip():
    est = _oscillator(random_state=3)
    twin = clone(est)
    assert twin.get_params()["random_state"] == 3
    assert set(est.get_params()) >= {"dictionary", "n_testing", "gp_config", "search"}


def test_zero_field_is_degenerate():
    grid = data.SamplingGrid.uniform(2, 0.0, 2.0, 0.2)
    zeros = data.Dataset([data.FieldSample(grid, np.zeros(grid.shape))] * 2,
                         {"variables": ["t", "x"], "fields": ["u"]})
    est = DCipher(["dt [u]", "dx^2 [u]"], n_testing=4, gp_config=TINY).fit(zeros)
    assert est.degenerate_ and est.result_.case == "null"
    assert abs(np.abs(est.beta_).sum() - 1) < 1e-12
    assert np.isfinite(est.loss_)


def test_rank_deficiency_names_the_dictionary(oscillator_data):
    est = _oscillator(dictionary=["dt [u]", "dt [(2.0 * u)]"], search=False)
    with pytest.raises(RankDeficiencyError, match=r"dt \[u\]"):
        est.fit(oscillator_data)


def test_names_must_fit_the_data(oscillator_data):
    with pytest.raises(ValueError):
        _oscillator(variables=("t", "x")).fit(oscillator_data)
    with pytest.raises(TypeError):
        _oscillator().fit(np.zeros((3, 3)))


def test_ablated_baseline_runs_with_fixed_g(oscillator_data):
    exp = get_experiment("oscillator")
    est = AblatedDCipher(exp.build_dictionary(), search=False, fixed_g=exp.g_star(), gp_config=TINY)
    est.fit(oscillator_data)
    assert est.design_.shape == (3 * oscillator_data.grid.size, 2)
    assert beta_rmse(est.beta_, exp.beta_star()) < 0.2
    r = est.design_ @ est.beta_ - pipeline.ablated_target(est.g_, est.samples_)
    assert est.loss_ == pytest.approx(float(r @ r), rel=1e-10)


def test_run_experiment_writes_tables(tmp_path):
    exp = get_experiment("heat")
    rows, summary = run_experiment(exp, [{"noise_ratio": 0.001, "n_samples": 2}], seeds=[0],
                                   out=tmp_path, n_testing=16, integration_step=0.02)
    assert rows[0]["error"] == "" and rows[0]["beta_rmse"] < 0.05
    assert summary[0].n_seeds == 1 and summary[0].n_failed == 0
    with (tmp_path / "runs.csv").open() as fh:
        written = list(csv.DictReader(fh))
    assert list(written[0]) == list(pipeline.CSV_FIELDS)
    assert summarize(written)[0].rmse_mean == pytest.approx(rows[0]["beta_rmse"])
    assert (tmp_path / "summary.csv").exists()


def test_failed_runs_are_counted_not_averaged():
    rows = [{"equation": "e", "method": "m", "setting": "", "success": "1", "beta_rmse": "0.1", "error": ""},
            {"equation": "e", "method": "m", "setting": "", "success": "", "beta_rmse": "", "error": "boom"},
            {"equation": "e", "method": "m", "setting": "", "success": "0", "beta_rmse": "0.3", "error": ""}]
    (s,) = summarize(rows)
    assert (s.n_seeds, s.n_failed) == (3, 1)
    assert s.success_mean == 0.5 and s.rmse_mean == pytest.approx(0.2)


def test_run_errors_become_rows():
    exp = get_experiment("oscillator")
    rows, summary = run_experiment(exp, [{"dictionary": ("dt [u]", "dt [(2.0 * u)]"), "n_samples": 2}],
                                   seeds=[0], gp_config=TINY, search=False)
    assert "RankDeficiencyError" in rows[0]["error"]
    assert summary[0].n_failed == 1
