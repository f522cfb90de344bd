"""Synthetic ground truth, noisy observation and the dataset text container.

Solvers integrate on a fine lattice and keep every ``stride``-th node, so the
stored truth is an integer refinement of every experimental sampling grid
(steps 0.07, 0.08, 0.1, 0.13, 0.2, 0.4 are all multiples of the default
stored step 0.005) and also contains the midpoints of a 0.01 integration
lattice.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_banded

from . import expr as ex

__all__ = [
    "oscillator_solution",
    "slm_solution",
    "SamplingGrid",
    "FieldSample",
    "Dataset",
    "InitialProfile",
    "sample_gp_initial_condition",
    "sample_initial_profile",
    "solve_heat",
    "solve_burgers",
    "solve_wave",
    "solve_oscillator",
    "solve_slm",
    "observe",
    "write_dataset",
    "read_dataset",
    "NonConvergenceError",
]

_DIGITS = 12


class NonConvergenceError(RuntimeError):
    """Raised when an inner nonlinear iteration fails to converge."""


@dataclass(frozen=True)
class SamplingGrid:
    """Regular lattice ``{start, start+step, ..., <= stop}`` per axis.

    Examples
    --------
    >>> g = SamplingGrid((0.0,), (2.0,), (0.07,))
    >>> g.shape, g.axes[0][-1]
    ((29,), 1.96)
    """

    start: tuple
    stop: tuple
    step: tuple

    def __post_init__(self):
        for name in ("start", "stop", "step"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not (len(self.start) == len(self.stop) == len(self.step)) or not self.start:
            raise ValueError("start, stop and step need one entry per axis")
        if any(s <= 0 for s in self.step):
            raise ValueError("grid steps must be positive")
        if any(b < a for a, b in zip(self.start, self.stop)):
            raise ValueError("grid stop must not precede start")

    @classmethod
    def uniform(cls, ndim: int, start: float, stop: float, step: float) -> "SamplingGrid":
        return cls((start,) * ndim, (stop,) * ndim, (step,) * ndim)

    @property
    def ndim(self) -> int:
        return len(self.start)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(math.floor((b - a) / h + 1e-9)) + 1
                     for a, b, h in zip(self.start, self.stop, self.step))

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def axes(self) -> list[np.ndarray]:
        return [np.round(a + h * np.arange(n), _DIGITS)
                for a, h, n in zip(self.start, self.step, self.shape)]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes, indexing="ij")

    @property
    def points(self) -> np.ndarray:
        """``(size, ndim)`` array of coordinates in row-major order."""
        return np.stack([m.ravel() for m in self.mesh()], axis=1)

    @property
    def bounds(self) -> list[tuple[float, float]]:
        return [(float(ax[0]), float(ax[-1])) for ax in self.axes]

    def spec(self) -> str:
        return ";".join(f"{a!r}:{b!r}:{h!r}" for a, b, h in zip(self.start, self.stop, self.step))

    @classmethod
    def from_spec(cls, text: str) -> "SamplingGrid":
        parts = [p.split(":") for p in text.strip().split(";")]
        if any(len(p) != 3 for p in parts):
            raise ValueError(f"bad grid spec {text!r}; expected start:stop:step per axis")
        cols = list(zip(*[[float(v) for v in p] for p in parts]))
        return cls(*cols)


@dataclass(frozen=True)
class FieldSample:
    """Field values on a grid, shape ``grid.shape + (N,)``."""

    grid: SamplingGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == self.grid.ndim:
            v = v[..., None]
        if v.shape[:-1] != self.grid.shape:
            raise ValueError(f"values of shape {v.shape} do not fit grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_components(self) -> int:
        return self.values.shape[-1]

    def component(self, j: int = 0) -> np.ndarray:
        return self.values[..., j]

    def restrict(self, grid: SamplingGrid) -> "FieldSample":
        """Values at the nodes nearest to each point of ``grid``."""
        index = []
        for ax_self, ax_new in zip(self.grid.axes, grid.axes):
            step = ax_self[1] - ax_self[0] if ax_self.size > 1 else 1.0
            k = np.rint((ax_new - ax_self[0]) / step).astype(int)
            index.append(np.clip(k, 0, ax_self.size - 1))
        return FieldSample(grid, self.values[np.ix_(*index)])


@dataclass
class Dataset:
    """``D`` observed samples on one grid plus provenance."""

    samples: list
    provenance: dict = field(default_factory=dict)
    truths: list | None = None

    def __post_init__(self):
        if not self.samples:
            raise ValueError("a dataset needs at least one sample")
        grid = self.samples[0].grid
        if any(s.grid != grid for s in self.samples):
            raise ValueError("all samples must share one grid")

    @property
    def grid(self) -> SamplingGrid:
        return self.samples[0].grid

    def __len__(self):
        return len(self.samples)


# -- initial conditions -----------------------------------------------------


def _se_kernel(a, b, length_scale, amplitude):
    d = np.subtract.outer(np.asarray(a, float), np.asarray(b, float))
    return amplitude ** 2 * np.exp(-0.5 * (d / length_scale) ** 2)


def _cholesky_with_jitter(K, jitter=1e-10, max_jitter=1e-6):
    n = K.shape[0]
    scale = max(float(np.mean(np.diag(K))), 1e-300)
    while True:
        try:
            return np.linalg.cholesky(K + jitter * scale * np.eye(n))
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > max_jitter * (1 + 1e-9):
                raise np.linalg.LinAlgError("ill-conditioned kernel") from None


def sample_gp_initial_condition(length_scale: float, amplitude: float, grid1d,
                                seed) -> np.ndarray:
    """Draw from a zero-mean squared-exponential GP prior on ``grid1d``.

    Cholesky with jitter ``1e-10`` (relative to the prior variance),
    escalated by a factor of 10 up to ``1e-6``.
    """
    x = np.asarray(grid1d, dtype=float)
    if amplitude == 0.0:
        return np.zeros_like(x)
    rng = np.random.default_rng(seed)
    L = _cholesky_with_jitter(_se_kernel(x, x, length_scale, amplitude))
    return L @ rng.standard_normal(x.size)


@dataclass(frozen=True)
class InitialProfile:
    """Smooth random profile: GP conditional mean through sampled anchors."""

    anchors: np.ndarray
    weights: np.ndarray
    length_scale: float
    amplitude: float

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        k = _se_kernel(x.ravel(), self.anchors, self.length_scale, self.amplitude)
        return (k @ self.weights).reshape(x.shape)


def sample_initial_profile(length_scale: float = 0.4, amplitude: float = 1.0,
                           interval: tuple[float, float] = (0.0, 2.0), seed=0,
                           anchor_step: float | None = None) -> InitialProfile:
    """Random smooth initial condition usable at any resolution.

    A GP draw on a coarse anchor lattice (spacing ``length_scale / 8`` by
    default) is extended to the real line through the SE-kernel conditional
    mean, which is infinitely differentiable.
    """
    lo, hi = interval
    step = anchor_step or length_scale / 8.0
    n = int(math.ceil((hi - lo) / step)) + 1
    anchors = np.linspace(lo, hi, n)
    values = sample_gp_initial_condition(length_scale, amplitude, anchors, seed)
    if amplitude == 0.0:
        return InitialProfile(anchors, np.zeros(n), length_scale, 1.0)
    K = _se_kernel(anchors, anchors, length_scale, amplitude)
    K[np.diag_indices_from(K)] += 1e-8 * amplitude ** 2
    weights = cho_solve(cho_factor(K), values)
    return InitialProfile(anchors, weights, length_scale, amplitude)


# -- solvers ----------------------------------------------------------------


def _profile_values(u0, x) -> np.ndarray:
    if callable(u0):
        return np.asarray(u0(x), dtype=float) * np.ones_like(x)
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != x.shape:
        raise ValueError("initial profile array must match the spatial lattice")
    return u0.copy()


def _source_fn(source) -> Callable[[float], float]:
    if source is None:
        return lambda t: 0.0
    if isinstance(source, ex.Expression):
        return lambda t: float(ex.evaluate(source, [t]))
    return source


def _n_steps(length: float, step: float) -> int:
    n = int(round(length / step))
    if n < 1 or abs(n * step - length) > 1e-9 * max(1.0, length):
        raise ValueError(f"step {step} does not divide length {length}")
    return n


def _stored(T, X, dt, dx, stride_t, stride_x, rows):
    grid = SamplingGrid((0.0, 0.0), (T, X), (dt * stride_t, dx * stride_x))
    values = np.asarray(rows)[:, ::stride_x]
    return FieldSample(grid, values)


def _strides(dt, dx, store_step):
    if store_step is None:
        return 1, 1
    st, sx = int(round(store_step / dt)), int(round(store_step / dx))
    if st < 1 or sx < 1 or abs(st * dt - store_step) > 1e-12 or abs(sx * dx - store_step) > 1e-12:
        raise ValueError("store_step must be an integer multiple of the solver steps")
    return st, sx


def solve_heat(theta1: float, source=None, u0=None, T: float = 2.0, X: float = 2.0,
               dt: float = 1e-3, dx: float = 1e-3, store_step: float | None = 0.005) -> FieldSample:
    """Backward-time centred-space scheme for ``u_t - θ1 u_xx = f(t)``.

    Homogeneous Neumann conditions at both ends via mirrored ghost nodes.
    The source is evaluated at the new time level.
    """
    if theta1 <= 0:
        raise ValueError("diffusivity must be positive")
    nt, nx = _n_steps(T, dt), _n_steps(X, dx)
    st, sx = _strides(dt, dx, store_step)
    x = np.linspace(0.0, X, nx + 1)
    u = _profile_values(u0 if u0 is not None else 0.0, x)
    f = _source_fn(source)
    r = theta1 * dt / dx ** 2
    ab = np.zeros((3, nx + 1))
    ab[0, 1:] = -r
    ab[1, :] = 1 + 2 * r
    ab[2, :-1] = -r
    ab[0, 1] = -2 * r  # ghost node mirror at x=0
    ab[2, -2] = -2 * r  # and at x=X
    rows = [u.copy()]
    for n in range(1, nt + 1):
        u = solve_banded((1, 1), ab, u + dt * f(n * dt), check_finite=False)
        if n % st == 0:
            rows.append(u.copy())
    return _stored(T, X, dt, dx, st, sx, rows)


def solve_burgers(theta1: float, u0=None, T: float = 2.0, X: float = 2.0,
                  dt: float = 2e-3, dx: float = 2e-3, store_step: float | None = 0.01,
                  max_iter: int = 10, tol: float = 1e-10) -> FieldSample:
    """Crank-Nicolson for ``u_t + u u_x - θ1 u_xx = 0`` with fixed end values.

    The advection term at the new level is linearised around the previous
    Picard iterate.
    """
    if theta1 <= 0:
        raise ValueError("viscosity must be positive")
    nt, nx = _n_steps(T, dt), _n_steps(X, dx)
    st, sx = _strides(dt, dx, store_step)
    x = np.linspace(0.0, X, nx + 1)
    u = _profile_values(u0 if u0 is not None else 0.0, x)
    left, right = u[0], u[-1]
    r = theta1 * dt / (2 * dx ** 2)
    c = dt / (4 * dx)
    rows = [u.copy()]
    inner = slice(1, -1)
    for n in range(1, nt + 1):
        lap = u[2:] - 2 * u[1:-1] + u[:-2]
        adv = u[1:-1] * (u[2:] - u[:-2])
        rhs = u[1:-1] + r * lap - c * adv
        guess = u.copy()
        for it in range(max_iter):
            m = nx - 1
            ab = np.zeros((3, m))
            a = guess[inner]
            ab[0, 1:] = (-r + c * a)[:-1]
            ab[1, :] = 1 + 2 * r
            ab[2, :-1] = (-r - c * a)[1:]
            b = rhs.copy()
            b[0] -= (-r - c * a[0]) * left
            b[-1] -= (-r + c * a[-1]) * right
            new = np.empty_like(u)
            new[0], new[-1] = left, right
            new[inner] = solve_banded((1, 1), ab, b, check_finite=False)
            change = np.max(np.abs(new - guess))
            guess = new
            if change <= tol * max(1.0, np.max(np.abs(new))):
                break
        else:
            raise NonConvergenceError(f"Picard iteration did not converge at step {n}")
        u = guess
        if not np.all(np.isfinite(u)):
            raise NonConvergenceError(f"non-finite solution at step {n}")
        if n % st == 0:
            rows.append(u.copy())
    return _stored(T, X, dt, dx, st, sx, rows)


def solve_wave(theta1: float, source=None, u0=None, T: float = 2.0, X: float = 2.0,
               dt: float = 1e-3, dx: float = 1e-3, store_step: float | None = 0.005) -> FieldSample:
    """Implicit scheme for ``u_tt - θ1 u_xx = f(t)``, ``u_t(0, x) = 0``.

    The Laplacian is weighted 1/4, 1/2, 1/4 over three time levels, which
    is unconditionally stable. End values stay at the initial ones.
    """
    if theta1 <= 0:
        raise ValueError("wave speed squared must be positive")
    nt, nx = _n_steps(T, dt), _n_steps(X, dx)
    st, sx = _strides(dt, dx, store_step)
    x = np.linspace(0.0, X, nx + 1)
    u_prev = _profile_values(u0 if u0 is not None else 0.0, x)
    left, right = u_prev[0], u_prev[-1]
    f = _source_fn(source)
    q = theta1 * dt ** 2 / dx ** 2
    m = nx - 1

    def lap(v):
        return v[2:] - 2 * v[1:-1] + v[:-2]

    def banded(weight):
        ab = np.zeros((3, m))
        ab[0, 1:] = -weight * q
        ab[1, :] = 1 + 2 * weight * q
        ab[2, :-1] = -weight * q
        return ab

    def with_ends(inner):
        out = np.empty(nx + 1)
        out[0], out[-1] = left, right
        out[1:-1] = inner
        return out

    # first step from the symmetric ghost level u^{-1} = u^{1}
    ab = banded(0.25)
    rhs = u_prev[1:-1] + 0.25 * q * lap(u_prev) + 0.5 * dt ** 2 * f(0.0)
    rhs[0] += 0.25 * q * left
    rhs[-1] += 0.25 * q * right
    u = with_ends(solve_banded((1, 1), ab, rhs, check_finite=False))
    rows = [u_prev.copy()]
    if st == 1:
        rows.append(u.copy())
    for n in range(1, nt):
        rhs = (2 * u[1:-1] - u_prev[1:-1] + q * (0.5 * lap(u) + 0.25 * lap(u_prev))
               + dt ** 2 * f(n * dt))
        rhs[0] += 0.25 * q * left
        rhs[-1] += 0.25 * q * right
        u_prev, u = u, with_ends(solve_banded((1, 1), ab, rhs, check_finite=False))
        if (n + 1) % st == 0:
            rows.append(u.copy())
    return _stored(T, X, dt, dx, st, sx, rows)


def oscillator_solution(theta, u0: float, v0: float) -> Callable[[np.ndarray], np.ndarray]:
    """Closed form of ``u'' + 2θ1θ2 u' + θ2² u = θ3 sin(θ4 t)`` (underdamped)."""
    zeta, omega, amp, freq = (float(v) for v in theta)
    if not 0 < zeta < 1:
        raise ValueError("closed form requires 0 < θ1 < 1")
    det_a = omega ** 2 - freq ** 2
    det_b = 2 * zeta * omega * freq
    den = det_a ** 2 + det_b ** 2
    p, q = amp * det_a / den, -amp * det_b / den  # particular: p sin + q cos
    wd = omega * math.sqrt(1 - zeta ** 2)
    decay = zeta * omega
    c1 = u0 - q
    c2 = (v0 - p * freq + decay * c1) / wd

    def u(t):
        t = np.asarray(t, dtype=float)
        hom = np.exp(-decay * t) * (c1 * np.cos(wd * t) + c2 * np.sin(wd * t))
        return hom + p * np.sin(freq * t) + q * np.cos(freq * t)

    return u


def _rk4_oscillator(theta, u0, v0, t, h=1e-4):
    zeta, omega, amp, freq = theta

    def rhs(s, y):
        return np.array([y[1], amp * math.sin(freq * s) - 2 * zeta * omega * y[1] - omega ** 2 * y[0]])

    n = _n_steps(float(t[-1]), h) if t[-1] > 0 else 0
    y = np.array([u0, v0], dtype=float)
    out = np.empty(n + 1)
    out[0] = y[0]
    for k in range(n):
        s = k * h
        k1 = rhs(s, y)
        k2 = rhs(s + h / 2, y + h / 2 * k1)
        k3 = rhs(s + h / 2, y + h / 2 * k2)
        k4 = rhs(s + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = y[0]
    fine = np.linspace(0.0, n * h, n + 1)
    return np.interp(t, fine, out)


def solve_oscillator(theta=(0.5, 4.0, 5.0, 3.0), u0: float = 0.0, v0: float = 0.0,
                     T: float = 2.0, store_step: float = 0.005) -> FieldSample:
    """Forced damped oscillator sampled on ``{0, store_step, ..., T}``.

    Underdamped parameters use the closed form; other regimes fall back to
    RK4 with step ``1e-4``.
    """
    grid = SamplingGrid((0.0,), (T,), (store_step,))
    t = grid.axes[0]
    theta = tuple(float(v) for v in theta)
    if 0 < theta[0] < 1:
        values = oscillator_solution(theta, u0, v0)(t)
    else:
        values = _rk4_oscillator(theta, u0, v0, t)
    return FieldSample(grid, values)


def slm_solution(theta: float, u0: Callable) -> Callable:
    """Exact ``u(t, a) = u0(a - t) exp(-∫_{a-t}^{a} 2 e^{θs} ds)``.

    ``u0`` must accept negative arguments; its values there play the role
    of the inflow at age 0.
    """

    def u(t, a):
        t, a = np.broadcast_arrays(np.asarray(t, float), np.asarray(a, float))
        if theta == 0:
            integral = 2.0 * t
        else:
            integral = (2.0 / theta) * (np.exp(theta * a) - np.exp(theta * (a - t)))
        return u0(a - t) * np.exp(-integral)

    return u


def solve_slm(theta: float = 1.5, u0: Callable | None = None, T: float = 2.0, A: float = 2.0,
              dt: float = 0.005, da: float = 0.005, mortality: Callable | None = None,
              store_step: float | None = None) -> FieldSample:
    """March ``u_t + u_a = -m(a) u`` along characteristics ``t - a = const``.

    Each step moves one node in both time and age and multiplies by
    ``exp(-∫m)`` over the step, integrated with 8-point Gauss-Legendre.
    ``m(a) = 2 e^{θa}`` unless ``mortality`` is given. Values entering at
    age 0 are ``u0(-t)`` carried along the characteristic through negative
    ages with the same mortality law, matching :func:`slm_solution`.
    """
    if abs(dt - da) > 1e-15:
        raise ValueError("characteristic marching requires dt == da")
    if u0 is None:
        u0 = lambda s: np.zeros_like(np.asarray(s, float))  # noqa: E731
    m = mortality or (lambda s: 2.0 * np.exp(theta * s))
    nt, na = _n_steps(T, dt), _n_steps(A, da)
    st, sa = _strides(dt, da, store_step)
    a = np.linspace(0.0, A, na + 1)
    nodes, weights = np.polynomial.legendre.leggauss(8)
    lo, hi = a[:-1], a[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    decay = np.exp(-np.sum(weights * m(mid[:, None] + half[:, None] * nodes), axis=1) * half)
    def inflow(t):
        # the profile continued through negative ages under the same mortality
        if mortality is None:
            return float(slm_solution(theta, u0)(t, 0.0))
        s = -0.5 * t * (1.0 - nodes)
        return float(u0(-t)) * math.exp(-0.5 * t * np.sum(weights * m(s)))

    u = np.asarray(u0(a), dtype=float) * np.ones_like(a)
    rows = [u.copy()]
    for n in range(1, nt + 1):
        new = np.empty_like(u)
        new[1:] = u[:-1] * decay
        new[0] = inflow(n * dt)
        u = new
        if n % st == 0:
            rows.append(u.copy())
    return _stored(T, A, dt, da, st, sa, rows)


# -- observation ------------------------------------------------------------


def observe(truth: FieldSample, grid: SamplingGrid, noise_ratio: float, seed) -> FieldSample:
    """Noisy measurement ``v = u + ε`` on ``grid``.

    ``ε`` is Gaussian with standard deviation ``noise_ratio`` times the
    per-component standard deviation of the true field over ``grid``.
    """
    if noise_ratio < 0:
        raise ValueError("noise ratio must be non-negative")
    clean = truth.restrict(grid)
    if noise_ratio == 0:
        return clean
    u = clean.values
    scale = noise_ratio * u.reshape(-1, u.shape[-1]).std(axis=0)
    rng = np.random.default_rng(seed)
    return FieldSample(grid, u + scale * rng.standard_normal(u.shape))


# -- text container ---------------------------------------------------------


def _format_value(v) -> str:
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_format_value(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(text: str):
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        return [_parse_value(p) for p in inner.split(",")] if inner else []
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def write_sample(path, sample: FieldSample, meta: dict,
                 variables: Sequence[str] | None = None,
                 fields: Sequence[str] | None = None) -> None:
    """Write one sample: ``# key: value`` header lines, then CSV."""
    variables = list(variables or [f"x{i}" for i in range(sample.grid.ndim)])
    fields = list(fields or [f"u{j}" for j in range(sample.n_components)])
    buf = io.StringIO()
    header = dict(meta)
    header["grid"] = sample.grid.spec()
    header["variables"] = variables
    header["fields"] = fields
    for key, value in header.items():
        buf.write(f"# {key}: {_format_value(value)}\n")
    buf.write(",".join(variables + fields) + "\n")
    pts = sample.grid.points
    vals = sample.values.reshape(-1, sample.n_components)
    for p, v in zip(pts, vals):
        buf.write(",".join(repr(float(x)) for x in (*p, *v)) + "\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_sample(path) -> tuple[FieldSample, dict]:
    meta = {}
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = _parse_value(value)
            elif line.strip():
                rows.append(line.strip())
    if "grid" not in meta:
        raise ValueError(f"{path}: missing grid header")
    grid = SamplingGrid.from_spec(str(meta["grid"]))
    names = rows[0].split(",")
    data = np.loadtxt(rows[1:], delimiter=",", ndmin=2)
    if data.shape != (grid.size, len(names)):
        raise ValueError(f"{path}: expected {grid.size} rows of {len(names)} columns")
    if not np.allclose(data[:, :grid.ndim], grid.points, atol=1e-9):
        raise ValueError(f"{path}: coordinates do not follow the declared grid")
    values = data[:, grid.ndim:].reshape(*grid.shape, -1)
    return FieldSample(grid, values), meta


def write_dataset(directory, dataset: Dataset, variables=None, fields=None) -> list[Path]:
    """One file per sample, ``sample_000.csv`` onwards."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for d, sample in enumerate(dataset.samples):
        meta = dict(dataset.provenance)
        meta["sample"] = d
        path = directory / f"sample_{d:03d}.csv"
        write_sample(path, sample, meta, variables, fields)
        paths.append(path)
    return paths


def read_dataset(directory) -> Dataset:
    directory = Path(directory)
    paths = sorted(directory.glob("sample_*.csv"))
    if not paths:
        raise FileNotFoundError(f"no dataset files in {directory}")
    samples, meta = [], {}
    for p in paths:
        s, m = read_sample(p)
        samples.append(s)
        meta = m
    meta.pop("sample", None)
    return Dataset(samples, meta)
