"""Compactly supported B-spline testing functions.

Each testing function is a tensor product of one-dimensional cardinal
B-splines of degree ``K + 1`` (so it is ``C^K``), supported on one tile of a
regular partition of the domain. Tiles are disjoint, which makes the set
orthogonal. Each function is scaled to unit L2 norm, either exactly
(Gauss-Legendre on every polynomial piece) or under the quadrature rule that
will later integrate against it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
import sympy
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import BSpline

from . import expr as ex

__all__ = [
    "BSpline1D",
    "TestingFunction",
    "make_testing_set",
    "tiles_per_axis",
    "knot_divisions",
    "eval_test_derivative",
    "derivative_of_product",
    "coefficient_derivatives",
]


class BSpline1D:
    """Cardinal B-spline of a given degree with uniform knots on ``[lo, hi]``.

    The spline and its first ``degree - 1`` derivatives vanish at both ends
    and outside the support.
    """

    def __init__(self, lo: float, hi: float, degree: int):
        if not hi > lo:
            raise ValueError("support interval must have positive width")
        if degree < 1:
            raise ValueError("degree must be at least 1")
        self.lo = float(lo)
        self.hi = float(hi)
        self.degree = int(degree)
        self.knots = np.linspace(self.lo, self.hi, self.degree + 2)
        base = BSpline.basis_element(self.knots, extrapolate=False)
        self._derivs = [base] + [base.derivative(k) for k in range(1, self.degree + 1)]

    @property
    def support(self) -> tuple[float, float]:
        return self.lo, self.hi

    def __call__(self, x, nu: int = 0) -> np.ndarray:
        if nu > self.degree:
            return np.zeros_like(np.asarray(x, dtype=float))
        x = np.asarray(x, dtype=float)
        out = self._derivs[nu](x)
        out = np.nan_to_num(out, nan=0.0)
        # BSpline treats the right end point as outside; use the exact limit 0
        # everywhere outside the open support
        return np.where((x > self.lo) & (x < self.hi), out, 0.0)

    def l2_norm_squared(self) -> float:
        """Exact ``∫B²`` over the support."""
        nodes, weights = leggauss(self.degree + 1)
        total = 0.0
        for a, b in zip(self.knots[:-1], self.knots[1:]):
            half = 0.5 * (b - a)
            x = a + half * (nodes + 1.0)
            total += half * np.sum(weights * self(x) ** 2)
        return float(total)

    def __repr__(self):
        return f"BSpline1D(lo={self.lo!r}, hi={self.hi!r}, degree={self.degree})"


@dataclass(frozen=True)
class TestingFunction:
    """Normalised tensor product of 1-D B-splines.

    Attributes
    ----------
    factors : tuple of BSpline1D
        One factor per independent variable.
    scale : float
        Multiplier making the L2 norm one.
    smoothness : int
        Highest derivative order per axis that vanishes on the boundary.
    """

    __test__ = False  # not a pytest class despite the name

    factors: tuple
    scale: float
    smoothness: int

    @property
    def ndim(self) -> int:
        return len(self.factors)

    @property
    def support(self) -> tuple[tuple[float, float], ...]:
        return tuple(f.support for f in self.factors)

    def factor_values(self, coords: Sequence[np.ndarray], alpha: Sequence[int]) -> list[np.ndarray]:
        """Per-axis derivative values; the first one carries the scale."""
        vals = [f(c, nu=a) for f, c, a in zip(self.factors, coords, alpha)]
        vals[0] = vals[0] * self.scale
        return vals

    def __call__(self, X: Sequence, alpha: Sequence[int] | None = None) -> np.ndarray:
        """Evaluate ``∂^α φ`` at points ``X`` (one broadcastable array per axis)."""
        if alpha is None:
            alpha = (0,) * self.ndim
        _check_alpha(alpha, self.ndim, self.smoothness)
        out = self.scale
        for f, x, a in zip(self.factors, X, alpha):
            out = out * f(x, nu=a)
        return np.asarray(out, dtype=float)


def _check_alpha(alpha, ndim, smoothness):
    if len(alpha) != ndim:
        raise ValueError(f"multi-index {tuple(alpha)} has wrong length for {ndim} dimensions")
    if any(a < 0 for a in alpha):
        raise ValueError("multi-index entries must be non-negative")
    if sum(alpha) > smoothness:
        raise ValueError("derivative order exceeds smoothness")


def tiles_per_axis(count: int, ndim: int) -> int:
    """Smallest ``n`` with ``n**ndim >= count``."""
    n = max(1, math.ceil(round(count ** (1.0 / ndim), 12)))
    while n ** ndim < count:
        n += 1
    return n


def knot_divisions(count: int, ndim: int, smoothness: int) -> int:
    """Number of equal knot intervals per axis of a testing set.

    Every knot of every testing function sits on this uniform partition,
    so an integration lattice refining it never has a knot inside a cell.
    """
    return tiles_per_axis(count, ndim) * (smoothness + 2)


def make_testing_set(domain: Sequence[tuple[float, float]], count: int, smoothness: int,
                     min_width: float = 0.0, rules: Sequence | None = None) -> list[TestingFunction]:
    """Build ``count`` orthonormal testing functions tiling ``domain``.

    Parameters
    ----------
    domain : sequence of (lo, hi)
        Box in ``R^M``.
    count : int
        Number of functions ``S``. The domain is cut into a lattice of
        ``ceil(S**(1/M))`` tiles per axis and the first ``S`` tiles in
        row-major order are used.
    smoothness : int
        ``K``; splines have degree ``K + 1``.
    min_width : float
        Smallest admissible tile width along any axis.
    rules : sequence of (nodes, weights), optional
        Per-axis quadrature rule. When given, functions are normalised
        under this rule, so the Gram matrix computed with the same rule is
        the identity up to round-off. Otherwise the exact L2 norm is used.

    Examples
    --------
    >>> fns = make_testing_set([(0.0, 2.0)], 10, 2)
    >>> len(fns), fns[0].support
    (10, ((0.0, 0.2),))
    """
    if count < 1:
        raise ValueError("need at least one testing function")
    if smoothness < 0:
        raise ValueError("smoothness must be non-negative")
    domain = [(float(lo), float(hi)) for lo, hi in domain]
    if not domain or any(not hi > lo for lo, hi in domain):
        raise ValueError("domain must be a non-degenerate box")
    m = len(domain)
    per_axis = tiles_per_axis(count, m)
    widths = [(hi - lo) / per_axis for lo, hi in domain]
    if min(widths) < min_width:
        raise ValueError("testing set too large for domain")
    degree = smoothness + 1
    out = []
    for idx in itertools.islice(itertools.product(range(per_axis), repeat=m), count):
        factors = tuple(
            BSpline1D(lo + k * w, lo + (k + 1) * w if k + 1 < per_axis else hi, degree)
            for (lo, hi), w, k in zip(domain, widths, idx)
        )
        if rules is None:
            norm2 = math.prod(f.l2_norm_squared() for f in factors)
        else:
            norm2 = math.prod(float(np.sum(np.asarray(w) * f(np.asarray(x)) ** 2))
                              for f, (x, w) in zip(factors, rules))
            if norm2 <= 0.0:
                raise ValueError("testing set too large for domain")
        out.append(TestingFunction(factors, 1.0 / math.sqrt(norm2), smoothness))
    return out


def eval_test_derivative(phi: TestingFunction, alpha: Sequence[int], x: Sequence[float]) -> float:
    """``∂^α φ`` at a single point ``x``."""
    return float(phi([np.asarray(v, dtype=float) for v in x], alpha))


@lru_cache(maxsize=256)
def _coefficient_derivative_fns(a: ex.Expression, alpha: tuple, ndim: int):
    names = [f"x{i}" for i in range(ndim)]
    syms = sympy.symbols(names)
    base = ex.to_sympy(a, variables=names, fields=[])
    fns = {}
    for beta in itertools.product(*(range(k + 1) for k in alpha)):
        d = base
        for s, k in zip(syms, beta):
            if k:
                d = sympy.diff(d, s, k)
        fns[beta] = sympy.lambdify(syms, d, "numpy")
    return fns


def coefficient_derivatives(a: ex.Expression, alpha: Sequence[int], X: Sequence[np.ndarray]):
    """All ``∂^β a`` for ``β ≤ α``, evaluated at ``X`` (plain, unprotected maths)."""
    alpha = tuple(int(k) for k in alpha)
    fns = _coefficient_derivative_fns(a, alpha, len(X))
    shape = np.broadcast_shapes(*(np.shape(x) for x in X))
    return {beta: np.broadcast_to(np.asarray(f(*X), dtype=float), shape) for beta, f in fns.items()}


def _is_constant(a: ex.Expression) -> bool:
    mv, mf = ex.max_indices(a)
    return mv < 0 and mf < 0


def derivative_of_product(phi: TestingFunction, alpha: Sequence[int], a: ex.Expression | None,
                          X: Sequence[np.ndarray]) -> np.ndarray:
    """``∂^α [a φ]`` at ``X`` by the Leibniz rule.

    ``a`` is an expression in the independent variables only; ``None``
    means ``a ≡ 1``.
    """
    alpha = tuple(int(k) for k in alpha)
    _check_alpha(alpha, phi.ndim, phi.smoothness)
    X = [np.asarray(x, dtype=float) for x in X]
    if a is None or _is_constant(a):
        c = 1.0 if a is None else float(ex.evaluate(a))
        return c * phi(X, alpha)
    if ex.uses_fields(a):
        raise ValueError("coefficient a(x) must not depend on the field")
    da = coefficient_derivatives(a, alpha, X)
    out = 0.0
    for beta, dval in da.items():
        rest = tuple(k - b for k, b in zip(alpha, beta))
        weight = math.prod(math.comb(k, b) for k, b in zip(alpha, beta))
        out = out + weight * dval * phi(X, rest)
    return np.asarray(out, dtype=float)
