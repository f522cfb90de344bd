"""Equation discovery end to end, the pointwise baseline, and scoring.

:class:`DCipher` smooths every observed field with a GP, assembles the weak
design matrix ``Z`` once, and searches closed-form ``g`` with the fitness
``min_{||β||_1 = 1} ||Z β - w(g)||²`` solved by CoLLie. :class:`AblatedDCipher`
keeps the search but scores candidates by pointwise squared error on
finite-difference derivatives of the smoothed fields.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator

from . import expr as ex
from . import smooth, symreg
from .basis import knot_divisions, make_testing_set
from .collie import NULL, CollieSolver, RankDeficiencyError
from .data import Dataset, FieldSample
from .weakform import (Dictionary, ExtendedDerivative, IntegrationLattice, ablated_design,
                       ablated_target, compute_Z)

__all__ = [
    "DiscoveryResult",
    "ExperimentSummary",
    "DCipher",
    "AblatedDCipher",
    "dcipher",
    "dcipher_ablated",
    "success_indicator",
    "beta_rmse",
    "align_sign",
    "run_experiment",
    "summarize",
    "write_rows",
    "CSV_FIELDS",
]

log = logging.getLogger(__name__)


class DiscoveryError(RuntimeError):
    """A numeric failure inside a discovery run."""


@dataclass
class DiscoveryResult:
    """Discovered equation ``Σ β_p E_p[u] - g(x, u) = 0``."""

    beta: np.ndarray
    g: ex.Expression
    loss: float
    case: str
    degenerate: bool
    dictionary: tuple
    variables: tuple
    fields: tuple
    seed: object = None
    wall_seconds: float = 0.0
    config_hash: str = ""
    history: list = field(default_factory=list)

    def g_text(self) -> str:
        return ex.to_string(self.g, self.variables, self.fields)

    def __str__(self):
        terms = " + ".join(f"{b:.4g}*{lab}" for b, lab in zip(self.beta, self.dictionary))
        return f"{terms} = {ex.to_sympy(self.g, self.variables, self.fields)}"


def _config_hash(params: dict) -> str:
    text = json.dumps({k: repr(v) for k, v in sorted(params.items())})
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def _as_dictionary(dictionary, variables, fields, allow_zero_order) -> Dictionary:
    if isinstance(dictionary, Dictionary):
        return dictionary
    return Dictionary(
        E if isinstance(E, ExtendedDerivative)
        else ExtendedDerivative.parse(E, variables, fields, allow_zero_order=allow_zero_order)
        for E in dictionary)


def _names(dataset: Dataset, key: str, prefix: str, n: int) -> tuple:
    names = dataset.provenance.get(key) if dataset.provenance else None
    return tuple(names) if names else tuple(f"{prefix}{i}" for i in range(n))


class _SearchMixin:
    """Shared outer loop: fixed-``g`` solve or genetic search over ``g``."""

    def _gp_config(self, n_vars: int, n_fields: int) -> symreg.GPConfig:
        from dataclasses import replace
        base = self.gp_config or symreg.GPConfig()
        return replace(base, n_variables=n_vars, n_fields=n_fields,
                       seed=base.seed if self.random_state is None else self.random_state)

    def _make_solver(self, A: np.ndarray) -> tuple[CollieSolver, bool]:
        scale = float(np.abs(A).max()) if A.size else 0.0
        if scale == 0.0 or not np.all(np.isfinite(A)):
            # no signal: every β fits equally well, so report the Null-case answer
            return CollieSolver(np.eye(A.shape[1]) if A.shape[1] else A, ridge=0.0), True
        try:
            return CollieSolver(A, ridge=self.ridge), False
        except RankDeficiencyError as err:
            labels = [E.label(self.variables_, self.fields_) for E in self.dictionary_]
            raise RankDeficiencyError(f"{err}; dictionary {labels}") from err

    def _search(self, target_fn, solver: CollieSolver, degenerate: bool, n_vars: int, n_fields: int):
        """Return ``(g, CollieResult, history)``."""

        def solve_for(g):
            b = target_fn(g)
            if degenerate:
                return solver.solve(np.zeros(solver.A.shape[0])), b
            return solver.solve(b), b

        def fitness(g):
            b = target_fn(g)
            if not np.all(np.isfinite(b)):
                return math.inf
            res, b = solve_for(g)
            if degenerate:
                return float(b @ b)
            return res.loss

        if not self.search:
            g = self.fixed_g if self.fixed_g is not None else ex.const(0.0)
            res, b = solve_for(g)
            return g, res, b, []
        cfg = self._gp_config(n_vars, n_fields)
        evo = symreg.evolve(fitness, cfg, progress=self.progress, names=(self.variables_, self.fields_))
        g = evo.best
        res, b = solve_for(g)
        return g, res, b, evo.history

    def _finish(self, g, res, b, A, degenerate, history, t0, dataset) -> DiscoveryResult:
        beta = np.asarray(res.z, dtype=float)
        r = A @ beta - b
        loss = float(r @ r)
        labels = tuple(E.label(self.variables_, self.fields_) for E in self.dictionary_)
        result = DiscoveryResult(
            beta=beta, g=g, loss=loss, case=NULL if degenerate else res.case, degenerate=degenerate,
            dictionary=labels, variables=self.variables_, fields=self.fields_,
            seed=self.random_state, wall_seconds=time.perf_counter() - t0,
            config_hash=_config_hash(self.get_params(deep=False)), history=history)
        self.result_ = result
        self.beta_ = beta
        self.g_ = g
        self.loss_ = loss
        self.degenerate_ = degenerate
        return result

    def _prepare(self, dataset: Dataset):
        if not isinstance(dataset, Dataset):
            raise TypeError("fit expects a Dataset")
        grid = dataset.grid
        n_fields = dataset.samples[0].n_components
        self.variables_ = tuple(self.variables) if self.variables else _names(dataset, "variables", "x", grid.ndim)
        self.fields_ = tuple(self.fields) if self.fields else _names(dataset, "fields", "u", n_fields)
        if len(self.variables_) != grid.ndim or len(self.fields_) != n_fields:
            raise ValueError("variable or field names do not match the data")
        self.dictionary_ = _as_dictionary(self.dictionary, self.variables_, self.fields_, self.allow_zero_order)
        if self.dictionary_.ndim != grid.ndim:
            raise ValueError("dictionary dimension does not match the data")
        return grid, n_fields

    def _smoothers(self, dataset: Dataset, d: int, sample: FieldSample):
        rs = None if self.random_state is None else [int(self.random_state), d]
        return smooth.fit_gp(sample, random_state=rs, **(self.smoother_params or {}))


class DCipher(_SearchMixin, BaseEstimator):
    """Variational equation discovery.

    Parameters
    ----------
    dictionary : sequence of ExtendedDerivative or str
        Spans the derivative part. Strings use the label syntax, e.g.
        ``"dt [u]"`` or ``"dx^2 [(u * u)]"``.
    n_testing : int, default=10
        Number of testing functions ``S``.
    smoothness : int or None
        ``K``; defaults to the dictionary's highest order.
    domain : sequence of (lo, hi) or None
        Integration box; defaults to the sampling grid's bounds.
    integration_step : float or None
        Largest midpoint-rule cell width; defaults to half the sampling
        step. Cells shrink slightly so testing-function knots fall on cell
        edges.
    gp_config : GPConfig or None
        Search settings; variables, fields and seed are filled in here.
    search : bool, default=True
        When False, ``g`` is held at ``fixed_g`` (zero by default) and only
        ``β`` is solved for.
    fixed_g : Expression or None
    ridge : float, default=0.0
        Passed to :class:`CollieSolver`.
    variables, fields : sequence of str or None
        Names used to parse string dictionaries and to print ``g``; read
        from the dataset provenance when omitted.
    allow_zero_order : bool, default=False
        Permit entries with no derivative (a plain ``h(x, u)`` column).
    random_state : int or None
        Seeds both the smoothers and the search.
    smoother_params : dict or None
        Extra :class:`GaussianProcessSmoother` parameters.
    progress : callable or None
        Receives one line per generation.

    Attributes
    ----------
    result_ : DiscoveryResult
    system_ : WeakSystem
    smoothers_ : list of lists of GaussianProcessSmoother
    """

    def __init__(self, dictionary=(), n_testing: int = 10, smoothness=None, domain=None,
                 integration_step=None, gp_config=None, search: bool = True, fixed_g=None,
                 ridge: float = 0.0, variables=None, fields=None, allow_zero_order: bool = False,
                 random_state=0, smoother_params=None, progress=None):
        self.dictionary = dictionary
        self.n_testing = n_testing
        self.smoothness = smoothness
        self.domain = domain
        self.integration_step = integration_step
        self.gp_config = gp_config
        self.search = search
        self.fixed_g = fixed_g
        self.ridge = ridge
        self.variables = variables
        self.fields = fields
        self.allow_zero_order = allow_zero_order
        self.random_state = random_state
        self.smoother_params = smoother_params
        self.progress = progress

    def _lattice(self, grid, smoothness: int) -> IntegrationLattice:
        domain = self.domain if self.domain is not None else grid.bounds
        step = self.integration_step
        if step is None:
            step = tuple(s / 2.0 for s in grid.step)
        divisions = knot_divisions(self.n_testing, len(domain), smoothness)
        return IntegrationLattice.aligned(tuple(domain), step, divisions)

    def fit(self, X, y=None):
        t0 = time.perf_counter()
        grid, n_fields = self._prepare(X)
        K = self.smoothness if self.smoothness is not None else max(1, self.dictionary_.max_order)
        lattice = self._lattice(grid, K)
        self.testing_ = make_testing_set(lattice.domain, self.n_testing, K, rules=lattice.rules())
        self.smoothers_ = [self._smoothers(X, d, s) for d, s in enumerate(X.samples)]
        fields = [smooth.predict(models, lattice.axes) for models in self.smoothers_]
        self.system_ = compute_Z(self.dictionary_, fields, self.testing_, lattice)
        Z = self.system_.Z
        solver, degenerate = self._make_solver(Z)
        g, res, b, history = self._search(self.system_.compute_w, solver, degenerate, grid.ndim, n_fields)
        self._finish(g, res, b, Z, degenerate, history, t0, X)
        return self

    def loss(self, beta, g) -> float:
        """``||Z β - w(g)||²`` on the fitted system."""
        r = self.system_.Z @ np.asarray(beta, dtype=float) - self.system_.compute_w(g)
        return float(r @ r)


class AblatedDCipher(_SearchMixin, BaseEstimator):
    """Same search, scored by pointwise MSE on estimated derivatives.

    Derivatives of ``h(x, v)`` are obtained by refitting a GP and taking
    central differences of its mean with step ``fd_step``; they are
    computed once per dictionary entry and sample.
    """

    def __init__(self, dictionary=(), gp_config=None, search: bool = True, fixed_g=None,
                 ridge: float = 0.0, fd_step: float = 1e-3, variables=None, fields=None,
                 allow_zero_order: bool = False, random_state=0, smoother_params=None, progress=None):
        self.dictionary = dictionary
        self.gp_config = gp_config
        self.search = search
        self.fixed_g = fixed_g
        self.ridge = ridge
        self.fd_step = fd_step
        self.variables = variables
        self.fields = fields
        self.allow_zero_order = allow_zero_order
        self.random_state = random_state
        self.smoother_params = smoother_params
        self.progress = progress

    def fit(self, X, y=None):
        t0 = time.perf_counter()
        grid, n_fields = self._prepare(X)
        self.smoothers_ = [self._smoothers(X, d, s) for d, s in enumerate(X.samples)]
        smoothed = [FieldSample(s.grid, smooth.predict(m, s.grid.axes))
                    for s, m in zip(X.samples, self.smoothers_)]
        rs = 0 if self.random_state is None else int(self.random_state)
        params = self.smoother_params or {}

        def derivative(sample, hv, alpha):
            return smooth.estimate_derivative(FieldSample(sample.grid, np.asarray(hv)[..., None]), alpha,
                                              h=self.fd_step, random_state=rs, **params)

        self.design_ = ablated_design(self.dictionary_, smoothed, derivative)
        self.samples_ = smoothed
        solver, degenerate = self._make_solver(self.design_)
        g, res, b, history = self._search(lambda g: ablated_target(g, smoothed), solver, degenerate,
                                          grid.ndim, n_fields)
        self._finish(g, res, b, self.design_, degenerate, history, t0, X)
        return self


def dcipher(dataset: Dataset, dictionary, n_testing: int = 10, gp_config=None, **params) -> DiscoveryResult:
    """Functional shortcut for :class:`DCipher`."""
    return DCipher(dictionary=dictionary, n_testing=n_testing, gp_config=gp_config, **params).fit(dataset).result_


def dcipher_ablated(dataset: Dataset, dictionary, gp_config=None, **params) -> DiscoveryResult:
    """Functional shortcut for :class:`AblatedDCipher`."""
    return AblatedDCipher(dictionary=dictionary, gp_config=gp_config, **params).fit(dataset).result_


# -- metrics ----------------------------------------------------------------


def align_sign(beta, target_beta) -> tuple[np.ndarray, int]:
    """Flip ``β`` so the coordinate where ``|β*|`` peaks is non-negative.

    Returns the aligned vector and the sign applied.
    """
    beta = np.asarray(beta, dtype=float)
    target = np.asarray(target_beta, dtype=float)
    k = int(np.argmax(np.abs(target)))
    sign = -1 if beta[k] * np.sign(target[k]) < 0 else 1
    return sign * beta, sign


def beta_rmse(beta, target_beta) -> float:
    """RMSE to the L1-normalised target after sign alignment.

    >>> beta_rmse([-0.8, 0.2], [4, -1])
    0.0
    """
    target = np.asarray(target_beta, dtype=float)
    target = target / np.abs(target).sum()
    aligned, _ = align_sign(beta, target)
    return float(np.sqrt(np.mean((aligned - target) ** 2)))


def success_indicator(found_g, target_g, variables: Sequence[str] | None = None,
                      fields: Sequence[str] | None = None) -> int:
    """1 when ``found_g`` has the augmented functional form of ``target_g``."""
    target = ex.augmented_form(target_g, variables, fields)
    try:
        return int(ex.matches(found_g, target, variables, fields))
    except (ValueError, TypeError, RecursionError):
        return 0


# -- experiments ------------------------------------------------------------


CSV_FIELDS = ("equation", "method", "setting", "seed", "success", "beta_rmse", "raw_loss",
              "wall_seconds", "found_g", "found_beta", "case", "degenerate", "error")


@dataclass
class ExperimentSummary:
    """Aggregates per (equation, method, setting)."""

    equation: str
    method: str
    setting: str
    n_seeds: int
    n_failed: int
    success_mean: float
    success_std: float
    rmse_mean: float
    rmse_std: float

    def as_row(self) -> dict:
        return dict(self.__dict__)


def _setting_text(setting: dict) -> str:
    parts = []
    for k, v in sorted(setting.items()):
        if k == "theta":
            v = ",".join(f"{n}={x!r}" for n, x in v.items())
        elif k == "dictionary":
            v = f"{len(v)} entries"
        parts.append(f"{k}={v}")
    return ";".join(parts)


_ESTIMATOR_KEYS = ("search", "fixed_g", "ridge", "smoother_params")
_DCIPHER_KEYS = ("n_testing", "integration_step")


def _one_run(experiment, setting: dict, seed: int, method: str, gp_config, params: dict,
             dataset: Dataset | None = None) -> dict:
    """Generate (unless given), discover and score one run; failures become an ``error`` entry."""
    row = {"equation": experiment.name, "method": method, "setting": _setting_text(setting), "seed": seed}
    t0 = time.perf_counter()
    theta = dict(experiment.theta, **(setting.get("theta") or {}))
    try:
        if dataset is None:
            dataset = experiment.generate(seed, noise_ratio=setting.get("noise_ratio"),
                                          n_samples=setting.get("n_samples"),
                                          grid_step=setting.get("grid_step"), theta=theta,
                                          **params.get("generator", {}))
        target_g = experiment.g_star(theta)
        search = params.get("search")
        search = experiment.search if search is None else search
        fixed_g = params.get("fixed_g")
        common = dict(dictionary=experiment.build_dictionary(setting.get("dictionary")),
                      gp_config=gp_config, search=search, random_state=seed,
                      fixed_g=fixed_g if fixed_g is not None else (None if search else target_g),
                      variables=experiment.variables, fields=experiment.fields,
                      allow_zero_order=experiment.allow_zero_order, ridge=params.get("ridge", 0.0),
                      smoother_params=params.get("smoother_params"))
        if method == "ablated":
            est = AblatedDCipher(fd_step=params.get("fd_step", 1e-3), **common)
        else:
            n_testing = params.get("n_testing") or experiment.n_testing
            step = params.get("integration_step") or experiment.integration_step
            est = DCipher(n_testing=n_testing, domain=experiment.domain, integration_step=step, **common)
        res = est.fit(dataset).result_
        target_beta = experiment.beta_star(theta)
        rmse = beta_rmse(res.beta, target_beta) if len(target_beta) == len(res.beta) else ""
        row.update(
            success=success_indicator(res.g, target_g, experiment.variables, experiment.fields)
            if search else "",
            beta_rmse=rmse, raw_loss=res.loss,
            found_g=res.g_text(), found_beta=" ".join(repr(float(b)) for b in res.beta),
            case=res.case, degenerate=int(res.degenerate), error="", history=res.history)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError, RuntimeError) as err:
        log.warning("run %s seed %s failed: %s", experiment.name, seed, err)
        row.update(success="", beta_rmse="", raw_loss="", found_g="", found_beta="", case="",
                   degenerate="", error=f"{type(err).__name__}: {err}", history=[])
    row["wall_seconds"] = time.perf_counter() - t0
    return row


def summarize(rows: Sequence[dict]) -> list[ExperimentSummary]:
    """Mean and standard deviation of success and RMSE per group; failed runs are counted, not averaged."""
    groups: dict[tuple, list] = {}
    for r in rows:
        groups.setdefault((r["equation"], r.get("method", "dcipher"), r.get("setting", "")), []).append(r)
    out = []
    for (eq, method, setting), rs in groups.items():
        ok = [r for r in rs if not r.get("error")]
        succ = [float(r["success"]) for r in ok if r.get("success") not in ("", None)]
        rmse = [float(r["beta_rmse"]) for r in ok if r.get("beta_rmse") not in ("", None)]
        out.append(ExperimentSummary(
            eq, method, setting, len(rs), len(rs) - len(ok),
            float(np.mean(succ)) if succ else math.nan, float(np.std(succ)) if succ else math.nan,
            float(np.mean(rmse)) if rmse else math.nan, float(np.std(rmse)) if rmse else math.nan))
    return out


def write_rows(path, rows: Sequence[dict], fieldnames: Sequence[str] = CSV_FIELDS) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fieldnames), extrasaction="ignore")
        writer.writeheader()
        for r in rows:
            writer.writerow(r)
    return path


def run_experiment(experiment, settings: Sequence[dict] = ({},), seeds: Sequence[int] = range(5),
                   methods: Sequence[str] = ("dcipher",), gp_config=None, n_jobs: int = 1,
                   out=None, dataset: Dataset | None = None,
                   **params) -> tuple[list[dict], list[ExperimentSummary]]:
    """Run every (setting, seed, method) and aggregate.

    Parameters
    ----------
    experiment : Experiment
    settings : sequence of dict
        Overrides per setting: ``noise_ratio``, ``n_samples``, ``grid_step``,
        ``theta`` and ``dictionary``.
    seeds, methods : sequences
        ``methods`` draws from ``"dcipher"`` and ``"ablated"``.
    gp_config : GPConfig or None
    n_jobs : int
        Worker processes across runs.
    out : path or None
        Directory receiving ``runs.csv`` and ``summary.csv``.
    dataset : Dataset or None
        Use this data for every run instead of generating it.
    **params
        ``n_testing``, ``integration_step``, ``search``, ``fixed_g``,
        ``ridge``, ``fd_step``, ``smoother_params`` and ``generator``
        (keyword options for the data generator).
    """
    jobs = [(s, seed, m) for s in settings for m in methods for seed in seeds]
    if n_jobs == 1 or len(jobs) == 1:
        rows = [_one_run(experiment, s, seed, m, gp_config, params, dataset) for s, seed, m in jobs]
    else:
        rows = Parallel(n_jobs=n_jobs)(delayed(_one_run)(experiment, s, seed, m, gp_config, params, dataset)
                                       for s, seed, m in jobs)
    summary = summarize(rows)
    if out is not None:
        write_rows(Path(out) / "runs.csv", rows)
        write_rows(Path(out) / "summary.csv", [s.as_row() for s in summary],
                   list(ExperimentSummary.__dataclass_fields__))
    return rows, summary
