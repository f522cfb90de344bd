"""Catalogue of the synthetic equations and their experimental settings.

Each :class:`Experiment` knows how to produce one ground-truth sample, which
dictionary to search with, and the target ``(β*, g*)`` written in that
dictionary's order and normalised to ``||β*||_1 = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import data
from . import expr as ex
from .weakform import Dictionary, ExtendedDerivative

__all__ = ["Experiment", "EXPERIMENTS", "get_experiment", "slm_dictionary"]


def _normalized(beta) -> tuple:
    beta = np.asarray(beta, dtype=float)
    return tuple(float(b) for b in beta / np.abs(beta).sum())


@dataclass(frozen=True)
class Experiment:
    """One equation together with its default experimental settings.

    Attributes
    ----------
    name : str
    variables, fields : tuple of str
        Names of the independent variables (time first) and field components.
    theta : dict
        Equation parameters.
    domain : tuple of (lo, hi)
    grid_step : float
        Spacing of the sampling grid along every axis.
    noise_ratios : tuple of float
        Noise settings; ``default_noise`` is used when none is requested.
    dictionary : tuple of str
        Dictionary entries in :meth:`ExtendedDerivative.label` syntax.
    target_beta, target_g : callable
        Map ``theta`` to the normalised target coefficients and ``∂``-free part.
    search : bool
        Whether ``g`` is searched; otherwise it is held at ``target_g``.
    """

    name: str
    variables: tuple
    fields: tuple
    theta: dict
    domain: tuple
    grid_step: float
    noise_ratios: tuple
    default_noise: float
    dictionary: tuple
    target_beta: Callable
    target_g: Callable
    truth: Callable | None
    n_samples: int = 10
    n_testing: int = 100
    integration_step: float = 0.01
    generations: int = 20
    search: bool = True
    allow_zero_order: bool = False
    extras: dict = field(default_factory=dict)

    @property
    def ndim(self) -> int:
        return len(self.variables)

    def build_dictionary(self, entries=None) -> Dictionary:
        entries = self.dictionary if entries is None else entries
        return Dictionary(ExtendedDerivative.parse(e, self.variables, self.fields,
                                                   allow_zero_order=self.allow_zero_order)
                          for e in entries)

    def beta_star(self, theta=None) -> np.ndarray:
        return np.asarray(self.target_beta(theta or self.theta), dtype=float)

    def g_star(self, theta=None) -> ex.Expression:
        return self.target_g(theta or self.theta)

    def sampling_grid(self, step: float | None = None) -> data.SamplingGrid:
        step = step or self.grid_step
        return data.SamplingGrid(tuple(lo for lo, _ in self.domain), tuple(hi for _, hi in self.domain),
                                 (step,) * self.ndim)

    def generate_truth(self, seed, index: int, theta=None, **options) -> data.FieldSample:
        if self.truth is None:
            raise ValueError(f"{self.name} data cannot be generated here; import a dataset instead")
        return self.truth(theta or self.theta, np.random.SeedSequence([seed, index, 0]), **options)

    def generate(self, seed, noise_ratio: float | None = None, n_samples: int | None = None,
                 grid_step: float | None = None, theta=None, keep_truth: bool = False,
                 **options) -> data.Dataset:
        """``D`` noisy observations; deterministic for a given seed."""
        theta = dict(self.theta, **(theta or {}))
        noise = self.default_noise if noise_ratio is None else noise_ratio
        D = n_samples or self.n_samples
        grid = self.sampling_grid(grid_step)
        samples, truths = [], []
        for d in range(D):
            truth = self.generate_truth(seed, d, theta, **options)
            samples.append(data.observe(truth, grid, noise, np.random.SeedSequence([seed, d, 1])))
            truths.append(truth)
        provenance = {"equation": self.name, "theta": [theta[k] for k in theta],
                      "theta_names": list(theta), "noise_ratio": float(noise), "seed": seed,
                      "variables": list(self.variables), "fields": list(self.fields)}
        provenance.update(self.extras)
        return data.Dataset(samples, provenance, truths if keep_truth else None)


def _profile(ss, lo=0.0, hi=2.0, length_scale=0.4, amplitude=1.0):
    rng_seed = int(np.random.default_rng(ss).integers(2 ** 63))
    return data.sample_initial_profile(length_scale, amplitude, (lo, hi), rng_seed)


def _heat_truth(theta, ss, length_scale=0.4, amplitude=1.0, dt=1e-3, dx=1e-3):
    src = None
    if theta.get("theta2", 0.0):
        t = ex.var(0)
        src = theta["theta2"] * ex.exp(theta["theta3"] * t)
    return data.solve_heat(theta["theta1"], src, _profile(ss, length_scale=length_scale, amplitude=amplitude),
                           dt=dt, dx=dx)


def _burgers_truth(theta, ss, length_scale=0.4, amplitude=1.0, dt=2e-3, dx=2e-3):
    store = 0.01 if dt == 2e-3 else 0.005
    return data.solve_burgers(theta["theta1"], _profile(ss, length_scale=length_scale, amplitude=amplitude),
                              dt=dt, dx=dx, store_step=store)


def _wave_truth(theta, ss, length_scale=0.4, amplitude=1.0, dt=1e-3, dx=1e-3):
    t = ex.var(0)
    src = theta["theta2"] * ex.exp(t) * ex.sin(theta["theta3"] * t)
    return data.solve_wave(theta["theta1"], src, _profile(ss, length_scale=length_scale, amplitude=amplitude),
                           dt=dt, dx=dx)


def _oscillator_truth(theta, ss, **_):
    u0, v0 = np.random.default_rng(ss).standard_normal(2)
    th = (theta["theta1"], theta["theta2"], theta["theta3"], theta["theta4"])
    return data.solve_oscillator(th, float(u0), float(v0))


def _slm_truth(theta, ss, length_scale=0.4, amplitude=1.0, **_):
    profile = _profile(ss, lo=-2.0, hi=2.0, length_scale=length_scale, amplitude=amplitude)
    return data.solve_slm(theta["theta1"], profile)


def _holomorphic_truth(theta, ss, degree=4, **_):
    """Real and imaginary parts of a random polynomial in ``z = x + iy``."""
    rng = np.random.default_rng(ss)
    coef = (rng.standard_normal(degree + 1) + 1j * rng.standard_normal(degree + 1))
    coef /= np.array([math.factorial(k) for k in range(degree + 1)])
    grid = data.SamplingGrid((0.0, 0.0), (2.0, 2.0), (0.005, 0.005))
    X, Y = grid.mesh()
    f = np.polyval(coef[::-1], X + 1j * Y)
    return data.FieldSample(grid, np.stack([f.real, f.imag], axis=-1))


def _t():
    return ex.var(0)


HEAT_BURGERS_Q = ("u", "dt [u]", "dx [u]", "dx [(u * u)]", "dx^2 [u]", "dx^2 [(u * u)]")
SECOND_ORDER_Q = ("dt [u]", "dx [u]", "dt^2 [u]", "dt dx [u]", "dx^2 [u]")
SLM_Q = ("dt [u]", "da [u]", "da^2 [u]", "dt^2 [u]", "dt da [u]", "da [(u * u)]", "da^2 [(u * u)]",
         "dt [(u * u)]", "dt^2 [(u * u)]", "dt [((u * u) * u)]", "da [((u * u) * u)]")
KS_Q = ("u", "dt [u]", "dx [u]", "dx [(u * u)]", "dx^2 [u]", "dx^2 [(u * u)]", "dx^3 [u]",
        "dx^3 [(u * u)]", "dx^4 [u]", "dx^4 [(u * u)]")


def slm_dictionary(k: int) -> tuple:
    """Nested SLM dictionaries ``Q_1 ⊂ ... ⊂ Q_10``; ``Q_k`` has ``k + 1`` entries."""
    if not 1 <= k <= len(SLM_Q) - 1:
        raise ValueError(f"dictionary index must be in 1..{len(SLM_Q) - 1}")
    return SLM_Q[: k + 1]


def _zero(_theta):
    return ex.const(0.0)


_BOX = ((0.0, 2.0), (0.0, 2.0))

_CATALOG = [
    Experiment(
        name="heat", variables=("t", "x"), fields=("u",), theta={"theta1": 0.25}, domain=_BOX,
        grid_step=0.07, noise_ratios=(0.001, 0.01, 0.1), default_noise=0.01,
        dictionary=HEAT_BURGERS_Q,
        target_beta=lambda th: _normalized([0, 1, 0, 0, -th["theta1"], 0]),
        target_g=_zero, truth=_heat_truth, search=False, allow_zero_order=True),
    Experiment(
        name="burgers", variables=("t", "x"), fields=("u",), theta={"theta1": 0.2}, domain=_BOX,
        grid_step=0.1, noise_ratios=(0.001, 0.01, 0.1), default_noise=0.01,
        dictionary=HEAT_BURGERS_Q,
        target_beta=lambda th: _normalized([0, 1, 0, 0.5, -th["theta1"], 0]),
        target_g=_zero, truth=_burgers_truth, search=False, allow_zero_order=True),
    Experiment(
        name="oscillator", variables=("t",), fields=("u",),
        theta={"theta1": 0.5, "theta2": 4.0, "theta3": 5.0, "theta4": 3.0}, domain=((0.0, 2.0),),
        grid_step=0.1, noise_ratios=(0.001, 0.005, 0.01, 0.1, 0.2, 0.5), default_noise=0.01,
        dictionary=("dt [u]", "dt^2 [u]"),
        # u'' + 2θ1θ2 u' = θ3 sin(θ4 t) - θ2² u, divided by 1 + 2θ1θ2
        target_beta=lambda th: _normalized([2 * th["theta1"] * th["theta2"], 1.0]),
        target_g=lambda th: (th["theta3"] * ex.sin(th["theta4"] * _t()) - th["theta2"] ** 2 * ex.fld(0))
        / (1 + 2 * th["theta1"] * th["theta2"]),
        truth=_oscillator_truth, n_testing=10, generations=30,
        extras={"grid_steps": [0.08, 0.1, 0.13, 0.2, 0.4], "sample_counts": [1, 2, 5, 10, 15]}),
    Experiment(
        name="inhomogeneous_heat", variables=("t", "x"), fields=("u",),
        theta={"theta1": 0.25, "theta2": 1.25, "theta3": 1.8}, domain=_BOX, grid_step=0.07,
        noise_ratios=(0.05, 0.1, 0.2), default_noise=0.05, dictionary=SECOND_ORDER_Q,
        target_beta=lambda th: _normalized([1, 0, 0, 0, -th["theta1"]]),
        target_g=lambda th: th["theta2"] * ex.exp(th["theta3"] * _t()) / (1 + th["theta1"]),
        truth=_heat_truth),
    Experiment(
        name="wave", variables=("t", "x"), fields=("u",),
        theta={"theta1": 1.0, "theta2": 2.0, "theta3": 3.0}, domain=_BOX, grid_step=0.07,
        noise_ratios=(0.001, 0.01, 0.015), default_noise=0.01, dictionary=SECOND_ORDER_Q,
        target_beta=lambda th: _normalized([0, 0, 1, 0, -th["theta1"]]),
        target_g=lambda th: th["theta2"] * ex.exp(_t()) * ex.sin(th["theta3"] * _t()) / (1 + th["theta1"]),
        truth=_wave_truth),
    Experiment(
        name="slm", variables=("t", "a"), fields=("u",), theta={"theta1": 1.5}, domain=_BOX,
        grid_step=0.07, noise_ratios=(0.001, 0.01), default_noise=0.001, dictionary=SLM_Q[:2],
        target_beta=lambda th: _normalized([1, 1]),
        target_g=lambda th: (-2.0 * ex.exp(th["theta1"] * ex.var(1)) * ex.fld(0)) / 2.0,
        truth=_slm_truth),
]

for _k in range(1, len(SLM_Q)):
    _CATALOG.append(Experiment(
        name=f"slm_q{_k}", variables=("t", "a"), fields=("u",), theta={"theta1": 1.5}, domain=_BOX,
        grid_step=0.07, noise_ratios=(0.001, 0.01), default_noise=0.001, dictionary=slm_dictionary(_k),
        target_beta=(lambda k: lambda th: _normalized([1, 1] + [0] * (k - 1)))(_k),
        target_g=lambda th: (-2.0 * ex.exp(th["theta1"] * ex.var(1)) * ex.fld(0)) / 2.0,
        truth=_slm_truth, search=False))

_CR = {
    1: (("dx [u1]", "dy [u2]", "dx^2 [u1]", "dy^2 [u2]"), (1, -1, 0, 0)),
    2: (("dx [u2]", "dy [u1]", "dx^2 [u2]", "dy^2 [u1]"), (1, 1, 0, 0)),
    3: (("dx [u1]", "dy [u1]", "dx^2 [u1]", "dy^2 [u1]"), (0, 0, 1, 1)),
    4: (("dx [u2]", "dy [u2]", "dx^2 [u2]", "dy^2 [u2]"), (0, 0, 1, 1)),
}
for _k, (_q, _b) in _CR.items():
    _CATALOG.append(Experiment(
        name=f"cauchy_riemann_q{_k}", variables=("x", "y"), fields=("u1", "u2"), theta={}, domain=_BOX,
        grid_step=0.1, noise_ratios=(0.001, 0.01, 0.1), default_noise=0.01, dictionary=_q,
        target_beta=(lambda b: lambda th: _normalized(b))(_b), target_g=_zero,
        truth=_holomorphic_truth, search=False))

_CATALOG.append(Experiment(
    name="kuramoto_sivashinsky", variables=("t", "x"), fields=("u",), theta={},
    domain=((0.0, 100.0), (0.0, 100.0)), grid_step=1.67, noise_ratios=(0.001, 0.01, 0.1),
    default_noise=0.01, dictionary=KS_Q,
    target_beta=lambda th: _normalized([0, 1, 0, 0.5, 1, 0, 0, 0, 1, 0]),
    target_g=_zero, truth=None, n_samples=1, integration_step=0.5, search=False, allow_zero_order=True))

EXPERIMENTS = {e.name: e for e in _CATALOG}


def get_experiment(name: str, **overrides) -> Experiment:
    try:
        exp = EXPERIMENTS[name]
    except KeyError:
        raise KeyError(f"unknown equation {name!r}; choose from {sorted(EXPERIMENTS)}") from None
    return replace(exp, **overrides) if overrides else exp
