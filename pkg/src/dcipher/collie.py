"""Least squares on the unit L1 sphere.

Solves ``min ||A z - b||^2  s.t.  ||z||_1 = 1`` with the CoLLie heuristic,
which follows (and linearly extends) the lasso path computed by LARS, and
with an exact but exponential-cost oracle that splits the sphere into its
``2**n`` simplices and solves a small QP on each of them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.linalg import solve_triangular
from scipy.optimize import brentq
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_design

__all__ = [
    "RankDeficiencyError",
    "SolutionPath",
    "CollieResult",
    "CollieSolver",
    "CollieRegressor",
    "lars_path",
    "solve",
    "exact_solve",
    "q_zero",
]

SHRINK = "shrink"
EXTEND = "extend"
NULL = "null"

EXACT_MAX_N = 12
_BRENT_XTOL = 1e-12


class RankDeficiencyError(np.linalg.LinAlgError):
    """The design matrix does not have full column rank."""


@dataclass
class SolutionPath:
    """Piecewise-linear lasso path.

    ``lambdas`` is strictly decreasing and ends at 0; ``coefs[i]`` is the
    solution at ``lambdas[i]`` for the objective ``||Az-b||^2 + lam*||z||_1``.
    """

    lambdas: np.ndarray
    coefs: np.ndarray

    def __call__(self, lam: float) -> np.ndarray:
        lams = self.lambdas
        if lam >= lams[0]:
            return self.coefs[0].copy()
        if lam <= 0.0:
            return self.coefs[-1].copy()
        # lambdas are decreasing: find i with lams[i] >= lam > lams[i+1]
        i = int(np.searchsorted(-lams, -lam, side="right")) - 1
        lo, hi = lams[i + 1], lams[i]
        t = (lam - lo) / (hi - lo)
        return self.coefs[i + 1] + t * (self.coefs[i] - self.coefs[i + 1])

    @property
    def norms(self) -> np.ndarray:
        return np.abs(self.coefs).sum(axis=1)

    @property
    def terminal_slope(self) -> np.ndarray:
        """Slope ``dc/dlambda`` on the last segment ``[lambda_{n-1}, 0]``."""
        if len(self.lambdas) < 2:
            return np.zeros(self.coefs.shape[1])
        lam_prev = self.lambdas[-2]
        return (self.coefs[-1] - self.coefs[-2]) / (0.0 - lam_prev)


@dataclass
class CollieResult:
    z: np.ndarray
    loss: float
    case: str
    lam: float | None = None
    info: dict = field(default_factory=dict)


def _check_rank(gram: np.ndarray) -> np.ndarray:
    """Cholesky factor of the Gram matrix, raising on (near) rank deficiency."""
    n = gram.shape[0]
    scale = max(float(np.max(np.diag(gram))), np.finfo(float).tiny)
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError("rank deficiency: Gram matrix is not positive definite")
    if n and np.min(np.diag(chol)) ** 2 <= 1e-13 * scale:
        raise RankDeficiencyError("rank deficiency: design has (numerically) dependent columns")
    return chol


@njit(cache=True)
def _lars_kernel(gram, aty, max_iter):
    n = gram.shape[0]
    lambdas = np.zeros(max_iter + 1)
    coefs = np.zeros((max_iter + 1, n))
    coef = np.zeros(n)
    corr = aty.copy()
    big_c = 0.0
    for i in range(n):
        big_c = max(big_c, abs(corr[i]))
    lambdas[0] = 2.0 * big_c
    if big_c <= 0.0:
        return lambdas[:1], coefs[:1]

    active = np.zeros(n, dtype=np.bool_)
    tiny = 1e-14 * big_c
    just_dropped = -1
    count = 1
    for _ in range(max_iter):
        if not active.any():
            j = int(np.argmax(np.abs(corr)))
            active[j] = True
        idx = np.flatnonzero(active)
        k_act = idx.size
        sub = np.empty((k_act, k_act))
        signs = np.empty(k_act)
        for a in range(k_act):
            signs[a] = 1.0 if corr[idx[a]] >= 0.0 else -1.0
            for c in range(k_act):
                sub[a, c] = gram[idx[a], idx[c]]
        w_act = np.linalg.solve(sub, signs)
        a_all = gram[:, idx] @ w_act

        gamma = big_c
        event = 0  # 0 end, 1 join, 2 drop
        who = -1
        for j in range(n):
            if active[j] or j == just_dropped:
                continue
            for num, den in ((big_c - corr[j], 1.0 - a_all[j]), (big_c + corr[j], 1.0 + a_all[j])):
                if den != 0.0:
                    g = num / den
                    if g > 0.0 and g < gamma:
                        gamma, event, who = g, 1, j
        for a in range(k_act):
            if w_act[a] != 0.0:
                g = -coef[idx[a]] / w_act[a]
                if g > 0.0 and g < gamma:
                    gamma, event, who = g, 2, idx[a]

        for a in range(k_act):
            coef[idx[a]] += gamma * w_act[a]
        big_c -= gamma
        just_dropped = -1
        if event == 2:
            coef[who] = 0.0
            active[who] = False
            just_dropped = who
        elif event == 1:
            active[who] = True
        if event == 0 or big_c <= tiny:
            big_c = 0.0
        corr = aty - gram @ coef
        lam = 2.0 * big_c
        if lam < lambdas[count - 1]:
            lambdas[count] = lam
            coefs[count] = coef
            count += 1
        else:
            # zero-length segment from a tie: overwrite the breakpoint
            coefs[count - 1] = coef
        if big_c == 0.0:
            break
    return lambdas[:count], coefs[:count]


def _lars_gram(gram: np.ndarray, aty: np.ndarray, max_iter: int | None = None):
    """Lasso-modified LARS driven by the Gram matrix.

    Returns the breakpoints as ``(lambdas, coefs)`` for the penalty
    parameterisation ``||Az-b||^2 + lam*||z||_1`` (so ``lam = 2 * max|corr|``).
    """
    n = gram.shape[0]
    max_iter = 8 * n + 8 if max_iter is None else max_iter
    return _lars_kernel(np.ascontiguousarray(gram, dtype=np.float64),
                        np.ascontiguousarray(aty, dtype=np.float64), max_iter)


def lars_path(A, b) -> SolutionPath:
    """Lasso path from ``z = 0`` down to the ordinary least-squares solution.

    Raises
    ------
    RankDeficiencyError
        If ``A`` does not have full column rank.
    """
    A, b = check_design(A, b)
    gram = A.T @ A
    _check_rank(gram)
    lambdas, coefs = _lars_gram(gram, A.T @ b)
    return SolutionPath(lambdas, coefs)


def q_zero(A, b) -> float:
    """L1 norm of the ordinary least-squares solution (computed via QR)."""
    A, b = check_design(A, b)
    q, r = np.linalg.qr(A)
    diag = np.abs(np.diag(r))
    if diag.size and np.min(diag) <= 1e-12 * max(np.max(diag), np.finfo(float).tiny):
        raise RankDeficiencyError("rank deficiency: R factor is singular")
    beta = solve_triangular(r, q.T @ b)
    return float(np.abs(beta).sum())


# -- exact oracle ----------------------------------------------------------


def _simplex_qp(H: np.ndarray, f: np.ndarray, tol: float = 1e-10, max_iter: int = 500):
    """Minimise ``y'Hy - 2f'y`` over the standard simplex (H positive definite).

    Primal active-set method on the KKT system of the equality-constrained
    subproblem; starts from the best vertex.
    """
    n = H.shape[0]
    vert = np.diag(H) - 2.0 * f
    k0 = int(np.argmin(vert))
    y = np.zeros(n)
    y[k0] = 1.0
    free = np.zeros(n, dtype=bool)
    free[k0] = True

    for _ in range(max_iter):
        F = np.flatnonzero(free)
        nf = F.size
        kkt = np.empty((nf + 1, nf + 1))
        kkt[:nf, :nf] = 2.0 * H[np.ix_(F, F)]
        kkt[:nf, nf] = 1.0
        kkt[nf, :nf] = 1.0
        kkt[nf, nf] = 0.0
        rhs = np.empty(nf + 1)
        rhs[:nf] = 2.0 * f[F]
        rhs[nf] = 1.0
        sol = np.linalg.solve(kkt, rhs)
        cand, mu = sol[:nf], sol[nf]

        if np.all(cand > tol):
            y = np.zeros(n)
            y[F] = cand
            grad = 2.0 * (H @ y - f)
            nu = grad + mu
            nu[free] = np.inf
            j = int(np.argmin(nu))
            if nu[j] >= -tol:
                break
            free[j] = True
            continue

        # step towards the candidate until a free coordinate hits zero
        cur = y[F]
        blocking = cand <= tol
        ratios = np.full(nf, np.inf)
        ratios[blocking] = cur[blocking] / (cur[blocking] - cand[blocking])
        i_block = int(np.argmin(ratios))
        alpha = float(np.clip(ratios[i_block], 0.0, 1.0))
        new = cur + alpha * (cand - cur)
        new[i_block] = 0.0
        new[new < 0.0] = 0.0
        y = np.zeros(n)
        y[F] = new
        y /= y.sum()
        free = y > 0.0
    loss_part = float(y @ H @ y - 2.0 * f @ y)
    return y, loss_part


def _exact_from_gram(gram: np.ndarray, atb: np.ndarray, btb: float):
    n = gram.shape[0]
    if n > EXACT_MAX_N:
        raise ValueError(f"exact oracle limited to small n (n={n} > {EXACT_MAX_N})")
    best_val, best_z = np.inf, None
    for signs in itertools.product((1.0, -1.0), repeat=n):
        s = np.array(signs)
        H = gram * np.outer(s, s)
        f = atb * s
        y, val = _simplex_qp(H, f)
        if val < best_val:
            best_val, best_z = val, s * y
    return best_z, max(best_val + btb, 0.0)


def exact_solve(A, b) -> np.ndarray:
    """Global minimiser of ``||Az-b||^2`` on the unit L1 sphere (``n <= 12``)."""
    A, b = check_design(A, b)
    if A.shape[1] > EXACT_MAX_N:
        raise ValueError(f"exact oracle limited to small n (n={A.shape[1]} > {EXACT_MAX_N})")
    gram = A.T @ A
    _check_rank(gram)
    z, _ = _exact_from_gram(gram, A.T @ b, float(b @ b))
    return z


# -- CoLLie ----------------------------------------------------------------


class CollieSolver:
    """CoLLie for a fixed design matrix and many right-hand sides.

    The Gram matrix, the rank check and the ``b = 0`` solution are computed
    once, which is what the inner loop of the equation search needs.

    Parameters
    ----------
    A : array of shape (m, n)
    ridge : float, default=0.0
        Added to the diagonal of ``A'A``. Zero keeps the full-rank
        requirement strict; ``1e-10`` tolerates collinear columns.
    """

    def __init__(self, A, ridge: float = 0.0):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2:
            raise ValueError("A must be a 2-D array")
        self.A = A
        self.ridge = float(ridge)
        gram = A.T @ A
        if self.ridge:
            gram = gram + self.ridge * np.eye(gram.shape[0])
        _check_rank(gram)
        self.gram = gram
        self._null: np.ndarray | None = None

    @property
    def null_solution(self) -> np.ndarray:
        if self._null is None:
            self._null, _ = _exact_from_gram(self.gram, np.zeros(self.gram.shape[0]), 0.0)
        return self._null

    def loss(self, z, b) -> float:
        r = self.A @ z - b
        return float(r @ r)

    def solve(self, b) -> CollieResult:
        b = np.asarray(b, dtype=float)
        atb = self.A.T @ b
        if not np.any(atb):
            z = self.null_solution.copy()
            return CollieResult(z, self.loss(z, b), NULL)

        lambdas, coefs = _lars_gram(self.gram, atb)
        path = SolutionPath(lambdas, coefs)
        norms = path.norms
        q0 = norms[-1]
        if q0 == 0.0:
            z = self.null_solution.copy()
            return CollieResult(z, self.loss(z, b), NULL)

        if q0 >= 1.0:
            z, lam = self._shrink(path, norms)
            case = SHRINK
        else:
            z, lam = self._extend(path)
            case = EXTEND
            if z is None:
                z = self._exact(atb, b)
                lam = None
        z = z / np.abs(z).sum()
        return CollieResult(z, self.loss(z, b), case, lam)

    def _shrink(self, path: SolutionPath, norms: np.ndarray):
        # norms are non-decreasing along the path (lambda decreasing)
        j = int(np.argmax(norms >= 1.0))
        if norms[j] == 1.0 or j == 0:
            return path.coefs[j].copy(), float(path.lambdas[j])
        lo, hi = path.lambdas[j], path.lambdas[j - 1]
        c_lo, c_hi = path.coefs[j], path.coefs[j - 1]
        step = c_lo - c_hi

        # measured from the λ = hi end so tiny fractions keep full precision
        def excess(frac):
            return np.abs(c_hi + frac * step).sum() - 1.0

        frac = brentq(excess, 0.0, 1.0, xtol=1e-300)
        return c_hi + frac * step, float(hi - frac * (hi - lo))

    def _extend(self, path: SolutionPath):
        c0 = path.coefs[-1]
        dc = path.terminal_slope

        def ext_norm(lam):
            return np.abs(c0 + lam * dc).sum()

        wrong = c0 * dc > 0
        if wrong.any():
            cross = -c0[wrong] / dc[wrong]
            # smallest index among ties follows from argmin
            lam_p = float(cross[int(np.argmin(cross))])
        else:
            lam_p = 0.0
        norm_p = ext_norm(lam_p)
        if norm_p >= 1.0:
            lam = brentq(lambda l: ext_norm(l) - 1.0, lam_p, 0.0, xtol=_BRENT_XTOL)
            return c0 + lam * dc, float(lam)
        slope = np.abs(dc).sum()
        if slope == 0.0:
            return None, None
        lam = lam_p + (1.0 - norm_p) / (-slope)
        return c0 + lam * dc, float(lam)

    def _exact(self, atb, b):
        z, _ = _exact_from_gram(self.gram, atb, float(b @ b))
        return z

    def exact(self, b) -> CollieResult:
        b = np.asarray(b, dtype=float)
        z = self._exact(self.A.T @ b, b)
        return CollieResult(z, self.loss(z, b), "exact")


def solve(A, b, ridge: float = 0.0) -> CollieResult:
    """Approximate minimiser of ``||Az-b||^2`` subject to ``||z||_1 = 1``.

    >>> r = solve(np.eye(2), [2.0, 0.0])
    >>> r.z, r.case
    (array([1., 0.]), 'shrink')
    """
    A, b = check_design(A, b)
    return CollieSolver(A, ridge=ridge).solve(b)


class CollieRegressor(RegressorMixin, BaseEstimator):
    """Linear model whose coefficient vector lies on the unit L1 sphere.

    Parameters
    ----------
    method : {'collie', 'exact'}, default='collie'
        ``'exact'`` enumerates all simplices of the sphere (``n <= 12``).
    ridge : float, default=0.0
        Diagonal loading of ``X'X``; see :class:`CollieSolver`.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    loss_ : float
        Residual sum of squares at ``coef_``.
    case_ : str
        Which branch produced the solution: ``'shrink'``, ``'extend'``,
        ``'null'`` or ``'exact'``.
    """

    def __init__(self, method: str = "collie", ridge: float = 0.0):
        self.method = method
        self.ridge = ridge

    def fit(self, X, y):
        X, y = check_design(X, y)
        if self.method not in ("collie", "exact"):
            raise ValueError(f"unknown method {self.method!r}")
        solver = CollieSolver(X, ridge=self.ridge)
        res = solver.solve(y) if self.method == "collie" else solver.exact(y)
        self.coef_ = res.z
        self.loss_ = res.loss
        self.case_ = res.case
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = np.asarray(X, dtype=float)
        return X @ self.coef_
