"""Gaussian-process reconstruction of noisy fields.

The model is a zero-mean GP with an isotropic squared-exponential kernel of
unit variance plus white noise, fitted to standardised observations by
maximising the log marginal likelihood over the length scale and the noise
level. Observations on a full tensor lattice take a Kronecker fast path:
the kernel factorises over axes, so only per-axis eigendecompositions are
needed. Scattered inputs use a dense Cholesky factorisation.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .data import FieldSample, SamplingGrid

__all__ = [
    "GaussianProcessSmoother",
    "fit_gp",
    "predict",
    "estimate_derivative",
    "lattice_axes",
]

_LOG_2PI = math.log(2.0 * math.pi)


def lattice_axes(X: np.ndarray, tol: float = 1e-12) -> list[np.ndarray] | None:
    """Axes of ``X`` if its rows enumerate a full lattice in row-major order."""
    n, m = X.shape
    axes = [np.unique(X[:, k]) for k in range(m)]
    if math.prod(a.size for a in axes) != n:
        return None
    mesh = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    if not np.allclose(mesh, X, rtol=0.0, atol=tol):
        return None
    return axes


def _rbf(a: np.ndarray, b: np.ndarray, length_scale: float) -> np.ndarray:
    d = np.subtract.outer(a, b)
    return np.exp(-0.5 * (d / length_scale) ** 2)


def _rbf_points(A: np.ndarray, B: np.ndarray, length_scale: float) -> np.ndarray:
    sq = (np.sum(A ** 2, 1)[:, None] + np.sum(B ** 2, 1)[None, :] - 2.0 * A @ B.T)
    return np.exp(-0.5 * np.maximum(sq, 0.0) / length_scale ** 2)


def _kron_matvec(mats: Sequence[np.ndarray], v: np.ndarray) -> np.ndarray:
    """``(mats[0] ⊗ mats[1] ⊗ ...) @ v`` for row-major flattened ``v``."""
    shape = [m.shape[1] for m in mats]
    t = v.reshape(shape)
    for k, mat in enumerate(mats):
        t = np.moveaxis(np.tensordot(mat, t, axes=([1], [k])), 0, k)
    return t.ravel()


def _kron_diag(diags: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones(1)
    for d in diags:
        out = np.multiply.outer(out, d).ravel()
    return out


class _LatticeTerms:
    """Per-axis eigendecompositions for one length scale."""

    def __init__(self, axes, y, length_scale):
        self.vecs, vals = [], []
        for ax in axes:
            w, q = np.linalg.eigh(_rbf(ax, ax, length_scale))
            self.vecs.append(q)
            vals.append(np.maximum(w, 0.0))
        self.eig = _kron_diag(vals)
        self.proj = _kron_matvec([q.T for q in self.vecs], y)

    def lml(self, noise):
        d = self.eig + noise
        n = d.size
        return -0.5 * (np.sum(self.proj ** 2 / d) + np.sum(np.log(d)) + n * _LOG_2PI)

    def weights(self, noise):
        return _kron_matvec(self.vecs, self.proj / (self.eig + noise))


def _dense_lml(X, y, length_scale, noise):
    K = _rbf_points(X, X, length_scale)
    K[np.diag_indices_from(K)] += noise
    try:
        c, low = cho_factor(K, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return -np.inf, None
    alpha = cho_solve((c, low), y, check_finite=False)
    lml = -0.5 * (y @ alpha) - np.sum(np.log(np.diag(c))) - 0.5 * y.size * _LOG_2PI
    return lml, alpha


class GaussianProcessSmoother(RegressorMixin, BaseEstimator):
    """Exact GP regression with an RBF + white-noise kernel.

    Parameters
    ----------
    length_scale_bounds, noise_level_bounds : (float, float)
        Search box for the length scale and the white-noise variance of the
        standardised data.
    n_starts : int
        Number of L-BFGS-B starts: ``(1, 1)`` followed by log-uniform
        draws inside the bounds.
    random_state : int
        Seed for the starting points.
    tol : float
        Optimiser tolerance.

    Attributes
    ----------
    length_scale_, noise_level_ : float
        Fitted hyperparameters (standardised units).
    noise_variance_ : float
        Noise variance in the units of ``y``. When the fitted RBF is
        numerically diagonal on the training inputs (length scale far
        below the point spacing) it is indistinguishable from white noise
        there, and its variance is counted as noise too.
    log_marginal_likelihood_value_ : float
    y_mean_, y_std_ : float
        Standardisation constants.
    """

    def __init__(self, length_scale_bounds=(1e-5, 1e5), noise_level_bounds=(1e-5, 1e5),
                 n_starts=5, random_state=0, tol=1e-6):
        self.length_scale_bounds = length_scale_bounds
        self.noise_level_bounds = noise_level_bounds
        self.n_starts = n_starts
        self.random_state = random_state
        self.tol = tol

    def _identifiable_noise(self) -> float:
        if self.axes_ is not None:
            gaps = [np.min(np.diff(a)) for a in self.axes_ if a.size > 1]
            spacing = min(gaps) if gaps else np.inf
        else:
            d = np.sqrt(np.maximum(
                np.sum((self.X_train_[:, None, :] - self.X_train_[None, :, :]) ** 2, -1), 0.0))
            d[np.diag_indices_from(d)] = np.inf
            spacing = float(d.min())
        if np.exp(-0.5 * (spacing / self.length_scale_) ** 2) < 1e-12:
            return self.noise_level_ + 1.0
        return self.noise_level_

    # likelihood --------------------------------------------------------------
    def _objective(self, log_params, X, y, axes):
        ell, noise = np.exp(log_params)
        if axes is not None:
            val = _LatticeTerms(axes, y, ell).lml(noise)
        else:
            val, _ = _dense_lml(X, y, ell, noise)
        return -val if np.isfinite(val) else 1e300

    def log_marginal_likelihood(self, length_scale, noise_level, X=None, y=None):
        """LML of standardised targets (training data by default)."""
        if X is None:
            check_is_fitted(self)
            X, ys, axes = self.X_train_, self._y_std_train, self.axes_
        else:
            X = np.asarray(X, dtype=float)
            y = np.asarray(y, dtype=float).ravel()
            ys = (y - y.mean()) / (y.std() or 1.0)
            axes = lattice_axes(X)
        return -self._objective(np.log([length_scale, noise_level]), X, ys, axes)

    def fit(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True)
        if X.shape[0] < 4:
            raise ValueError("need at least 4 sample points")
        self.y_mean_ = float(np.mean(y))
        std = float(np.std(y))
        self.y_std_ = std if std > 0 else 1.0
        ys = (y - self.y_mean_) / self.y_std_
        axes = lattice_axes(X)
        self.X_train_ = X
        self.axes_ = axes
        self._y_std_train = ys

        bounds = np.log([self.length_scale_bounds, self.noise_level_bounds])
        rng = np.random.default_rng(self.random_state)
        # unit start first, then log-uniform restarts
        starts = np.vstack([np.zeros((1, 2)),
                            rng.uniform(bounds[:, 0], bounds[:, 1], size=(max(self.n_starts - 1, 0), 2))])
        best = None
        for x0 in starts:
            res = minimize(self._objective, x0, args=(X, ys, axes), method="L-BFGS-B",
                           bounds=bounds, options={"ftol": self.tol * 1e-3, "gtol": self.tol})
            if best is None or res.fun < best.fun:
                best = res
        self.length_scale_, self.noise_level_ = (float(v) for v in np.exp(best.x))
        self.log_marginal_likelihood_value_ = float(-best.fun)
        self.noise_variance_ = self._identifiable_noise() * self.y_std_ ** 2
        if axes is not None:
            self.alpha_ = _LatticeTerms(axes, ys, self.length_scale_).weights(self.noise_level_)
        else:
            lml, alpha = _dense_lml(X, ys, self.length_scale_, self.noise_level_)
            if alpha is None:
                raise np.linalg.LinAlgError("ill-conditioned kernel")
            self.alpha_ = alpha
        return self

    def predict(self, X):
        """Posterior mean, de-standardised."""
        check_is_fitted(self)
        X = validate_data(self, X, reset=False)
        if self.axes_ is not None:
            query_axes = lattice_axes(X)
            if query_axes is not None:
                return self.predict_lattice(query_axes).ravel()
        k = _rbf_points(X, self.X_train_, self.length_scale_)
        return self.y_mean_ + self.y_std_ * (k @ self.alpha_)

    def predict_lattice(self, axes: Sequence[np.ndarray]) -> np.ndarray:
        """Posterior mean on the tensor lattice spanned by ``axes``."""
        check_is_fitted(self)
        axes = [np.asarray(a, dtype=float) for a in axes]
        if self.axes_ is not None:
            mats = [_rbf(q, a, self.length_scale_) for q, a in zip(axes, self.axes_)]
            mean = _kron_matvec(mats, self.alpha_)
        else:
            pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
            mean = _rbf_points(pts, self.X_train_, self.length_scale_) @ self.alpha_
        return (self.y_mean_ + self.y_std_ * mean).reshape([a.size for a in axes])

    def with_targets(self, y) -> "GaussianProcessSmoother":
        """Copy with the same hyperparameters refitted to new targets."""
        other = GaussianProcessSmoother(**self.get_params())
        y = np.asarray(y, dtype=float).ravel()
        other.n_features_in_ = self.n_features_in_
        other.X_train_, other.axes_ = self.X_train_, self.axes_
        other.length_scale_, other.noise_level_ = self.length_scale_, self.noise_level_
        other.y_mean_ = float(np.mean(y))
        std = float(np.std(y))
        other.y_std_ = std if std > 0 else 1.0
        ys = (y - other.y_mean_) / other.y_std_
        other._y_std_train = ys
        other.noise_variance_ = other._identifiable_noise() * other.y_std_ ** 2
        if self.axes_ is not None:
            other.alpha_ = _LatticeTerms(self.axes_, ys, other.length_scale_).weights(other.noise_level_)
        else:
            other.alpha_ = _dense_lml(self.X_train_, ys, other.length_scale_, other.noise_level_)[1]
        other.log_marginal_likelihood_value_ = other.log_marginal_likelihood(
            other.length_scale_, other.noise_level_)
        return other


def fit_gp(observed: FieldSample, random_state=0, **params) -> list[GaussianProcessSmoother]:
    """One fitted smoother per field component."""
    X = observed.grid.points
    return [GaussianProcessSmoother(random_state=random_state, **params).fit(X, observed.values[..., j].ravel())
            for j in range(observed.n_components)]


def predict(models: Sequence[GaussianProcessSmoother], axes: Sequence[np.ndarray]) -> np.ndarray:
    """Posterior means on a lattice, shape ``lattice + (N,)``."""
    return np.stack([m.predict_lattice(axes) for m in models], axis=-1)


def estimate_derivative(observed: FieldSample, alpha: Sequence[int], grid: SamplingGrid | None = None,
                        h: float = 1e-3, random_state=0, component: int = 0, **params) -> np.ndarray:
    """Iterated GP fit plus central difference of the posterior mean.

    Elementary derivatives are taken axis by axis, axis 0 (time) first;
    each step refits a GP to the previous step's values on the observed
    grid. The last step is evaluated on ``grid`` (the observed grid by
    default). Returns an array of shape ``grid.shape``.
    """
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != observed.grid.ndim or any(a < 0 for a in alpha):
        raise ValueError("multi-index does not fit the data dimension")
    if sum(alpha) < 1:
        raise ValueError("need a derivative of order at least one")
    target = grid or observed.grid
    steps = [k for k, a in enumerate(alpha) for _ in range(a)]
    X = observed.grid.points
    values = observed.values[..., component].ravel()
    for i, axis in enumerate(steps):
        model = GaussianProcessSmoother(random_state=random_state, **params).fit(X, values)
        out_axes = target.axes if i == len(steps) - 1 else observed.grid.axes
        plus = [a + h if k == axis else a for k, a in enumerate(out_axes)]
        minus = [a - h if k == axis else a for k, a in enumerate(out_axes)]
        deriv = (model.predict_lattice(plus) - model.predict_lattice(minus)) / (2.0 * h)
        values = deriv.ravel()
    return values.reshape(target.shape)
