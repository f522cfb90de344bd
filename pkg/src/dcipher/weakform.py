"""Weak formulation: extended derivatives, the matrix ``Z`` and vector ``w``.

For an extended derivative ``E = (α, a, h)``, i.e. ``u ↦ a(x) ∂^α[h(x, u)]``,
and a testing function ``φ`` that vanishes with its derivatives on the
boundary, integration by parts moves every derivative onto ``a φ``::

    ∫ E[u] φ = ∫ h(x, u) (-1)^|α| ∂^α[a φ] dx.

Fields therefore only have to be known pointwise (they are never
differentiated). Integrals are midpoint Riemann sums over a lattice of
cells covering the domain.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse

from . import expr as ex
from .basis import TestingFunction, derivative_of_product

__all__ = [
    "ExtendedDerivative",
    "Dictionary",
    "IntegrationLattice",
    "WeakSystem",
    "functional_F",
    "compute_Z",
    "compute_w",
    "variational_loss",
    "mse_loss_ablated",
    "ablated_design",
]


@dataclass(frozen=True)
class ExtendedDerivative:
    """``u ↦ a(x) ∂^α [h(x, u)]``.

    ``a`` is ``None`` for the constant 1. ``h`` defaults to the first field
    component. Zero-order entries (``|α| = 0``) are rejected unless
    ``allow_zero_order`` is set; they are not derivatives, but some
    published dictionaries list the bare field alongside derivatives.
    """

    alpha: tuple
    a: ex.Expression | None = None
    h: ex.Expression = field(default_factory=lambda: ex.fld(0))
    allow_zero_order: bool = False

    def __post_init__(self):
        alpha = tuple(int(k) for k in self.alpha)
        object.__setattr__(self, "alpha", alpha)
        if any(k < 0 for k in alpha):
            raise ValueError("multi-index entries must be non-negative")
        if sum(alpha) == 0 and not self.allow_zero_order:
            raise ValueError("extended derivative must have order at least one")
        if self.a is not None and ex.uses_fields(self.a):
            raise ValueError("coefficient a must depend on x only")

    @property
    def order(self) -> int:
        return sum(self.alpha)

    def label(self, variables: Sequence[str] | None = None,
              fields: Sequence[str] | None = None) -> str:
        variables = list(variables or [f"x{i}" for i in range(len(self.alpha))])
        parts = []
        for name, k in zip(variables, self.alpha):
            if k == 1:
                parts.append(f"d{name}")
            elif k > 1:
                parts.append(f"d{name}^{k}")
        h = ex.to_string(self.h, variables, fields)
        core = f"{' '.join(parts)} [{h}]" if parts else h
        if self.a is not None:
            core = f"{ex.to_string(self.a, variables, fields)} * {core}"
        return core

    @classmethod
    def parse(cls, text: str, variables: Sequence[str], fields: Sequence[str],
              allow_zero_order: bool = False) -> "ExtendedDerivative":
        """Inverse of :meth:`label`, e.g. ``"dt dx^2 [(u * u)]"``."""
        text = text.strip()
        a = None
        m = re.fullmatch(r"(.*?)\s*\*\s*((?:d\w+(?:\^\d+)?\s*)+\[.*\])", text)
        if m and "[" not in m.group(1):
            a = ex.parse(m.group(1), variables, [])
            text = m.group(2)
        m = re.fullmatch(r"((?:d\w+(?:\^\d+)?\s*)*)\[(.*)\]", text)
        if m:
            ops, body = m.group(1).split(), m.group(2)
        else:
            ops, body = [], text
        alpha = [0] * len(variables)
        for op in ops:
            name, _, power = op[1:].partition("^")
            if name not in variables:
                raise ValueError(f"unknown variable {name!r} in {text!r}")
            alpha[list(variables).index(name)] += int(power or 1)
        h = ex.parse(body, variables, fields)
        return cls(tuple(alpha), a, h, allow_zero_order=allow_zero_order)


class Dictionary(tuple):
    """Ordered, duplicate-free collection of extended derivatives."""

    def __new__(cls, entries):
        entries = tuple(entries)
        if not entries:
            raise ValueError("dictionary needs at least one entry")
        if len(set(entries)) != len(entries):
            raise ValueError("dictionary entries must be distinct")
        ndim = {len(e.alpha) for e in entries}
        if len(ndim) != 1:
            raise ValueError("all entries must share the number of independent variables")
        return super().__new__(cls, entries)

    @property
    def max_order(self) -> int:
        return max(e.order for e in self)

    @property
    def ndim(self) -> int:
        return len(self[0].alpha)


@dataclass(frozen=True)
class IntegrationLattice:
    """Cell-centred midpoint rule on a box.

    Each axis ``[lo, hi]`` is split into cells of width close to ``step``
    (adjusted so they tile the interval exactly); nodes sit at cell centres.
    """

    domain: tuple
    step: tuple

    def __post_init__(self):
        dom = tuple((float(lo), float(hi)) for lo, hi in self.domain)
        step = self.step
        if np.isscalar(step):
            step = (float(step),) * len(dom)
        step = tuple(float(s) for s in step)
        if len(step) != len(dom) or any(s <= 0 for s in step) or any(hi <= lo for lo, hi in dom):
            raise ValueError("integration lattice needs a non-degenerate domain and positive steps")
        object.__setattr__(self, "domain", dom)
        object.__setattr__(self, "step", step)

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(max(1, int(round((hi - lo) / s))) for (lo, hi), s in zip(self.domain, self.step))

    @property
    def widths(self) -> tuple[float, ...]:
        return tuple((hi - lo) / n for (lo, hi), n in zip(self.domain, self.counts))

    @property
    def axes(self) -> list[np.ndarray]:
        return [lo + w * (np.arange(n) + 0.5) for (lo, _), w, n in zip(self.domain, self.widths, self.counts)]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def size(self) -> int:
        return math.prod(self.counts)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.widths)

    @property
    def ndim(self) -> int:
        return len(self.domain)

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes, indexing="ij")

    @classmethod
    def aligned(cls, domain, step, divisions: int) -> "IntegrationLattice":
        """Lattice whose cells refine ``divisions`` equal parts of each axis.

        Cell widths are the largest that divide each part evenly and do not
        exceed ``step``. Testing-function derivatives have kinks at the
        knots; keeping knots on cell edges keeps the midpoint rule second
        order there.
        """
        dom = tuple((float(lo), float(hi)) for lo, hi in domain)
        steps = (step,) * len(dom) if np.isscalar(step) else tuple(step)
        out = []
        for (lo, hi), s in zip(dom, steps):
            part = (hi - lo) / divisions
            out.append(part / max(1, math.ceil(part / float(s) - 1e-9)))
        return cls(dom, tuple(out))

    def rules(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per-axis (nodes, weights) for normalising testing functions."""
        return [(ax, np.full(ax.size, w)) for ax, w in zip(self.axes, self.widths)]


def _support_indices(phi: TestingFunction, lattice: IntegrationLattice) -> list[np.ndarray]:
    idx = []
    for (lo, hi), ax in zip(phi.support, lattice.axes):
        idx.append(np.nonzero((ax > lo) & (ax < hi))[0])
    return idx


def _weight_row(phi, alpha, a, lattice) -> tuple[np.ndarray, np.ndarray]:
    """Flat lattice indices and weights ``vol·(-1)^|α|·∂^α[aφ]`` on supp φ."""
    idx = _support_indices(phi, lattice)
    if any(i.size == 0 for i in idx):
        return np.empty(0, dtype=np.int64), np.empty(0)
    sub_axes = [ax[i] for ax, i in zip(lattice.axes, idx)]
    alpha = tuple(alpha)
    if a is None or (ex.max_indices(a) == (-1, -1)):
        c = 1.0 if a is None else float(ex.evaluate(a))
        vals = phi.factor_values(sub_axes, alpha)
        block = vals[0]
        for v in vals[1:]:
            block = np.multiply.outer(block, v)
        block = c * block
    else:
        X = np.meshgrid(*sub_axes, indexing="ij")
        block = derivative_of_product(phi, alpha, a, X)
    block = block * ((-1) ** sum(alpha) * lattice.cell_volume)
    flat = np.ravel_multi_index(np.meshgrid(*idx, indexing="ij"), lattice.shape).ravel()
    return flat, np.asarray(block).ravel()


def _weight_matrix(testing: Sequence[TestingFunction], alpha, a, lattice) -> sparse.csr_matrix:
    rows, cols, vals = [], [], []
    for s, phi in enumerate(testing):
        flat, w = _weight_row(phi, alpha, a, lattice)
        rows.append(np.full(flat.size, s))
        cols.append(flat)
        vals.append(w)
    return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(len(testing), lattice.size))


def _as_field_array(values, lattice: IntegrationLattice) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.shape == lattice.shape:
        v = v[..., None]
    if v.shape[:-1] != lattice.shape:
        raise ValueError(f"field of shape {v.shape} does not match lattice {lattice.shape}")
    return v


def _eval_on_lattice(e: ex.Expression, lattice: IntegrationLattice, field_values: np.ndarray) -> np.ndarray:
    X = lattice.mesh()
    U = [field_values[..., j] for j in range(field_values.shape[-1])]
    return np.asarray(ex.evaluate(e, X, U), dtype=float)


def functional_F(E: ExtendedDerivative, field_values, phi: TestingFunction,
                 lattice: IntegrationLattice) -> float:
    """``∫ h(x, û) (-1)^|α| ∂^α[a φ] dx`` by the midpoint rule."""
    if E.order > phi.smoothness:
        raise ValueError("derivative order exceeds smoothness")
    u = _as_field_array(field_values, lattice)
    flat, w = _weight_row(phi, E.alpha, E.a, lattice)
    h = _eval_on_lattice(E.h, lattice, u).ravel()
    return float(w @ h[flat])


@dataclass
class WeakSystem:
    """``Z`` for one dictionary plus what is needed to build ``w(g)``.

    Rows are ordered by sample ``d`` then testing function ``s``.
    """

    Z: np.ndarray
    lattice: IntegrationLattice
    testing: list
    fields: np.ndarray  # (D, *lattice.shape, N)
    dictionary: Dictionary
    phi_weights: sparse.csr_matrix = field(repr=False, default=None)
    _mesh: list = field(default=None, repr=False)

    def __post_init__(self):
        if self.phi_weights is None:
            self.phi_weights = _weight_matrix(self.testing, (0,) * self.lattice.ndim, None, self.lattice)

    @property
    def n_samples(self) -> int:
        return self.fields.shape[0]

    def compute_w(self, g: ex.Expression) -> np.ndarray:
        """``w[(d, s)] = ∫ g(x, û_d) φ_s``."""
        if self._mesh is None:
            self._mesh = [m.ravel() for m in self.lattice.mesh()]
        D = self.n_samples
        flat_fields = self.fields.reshape(D, -1, self.fields.shape[-1])
        if ex.uses_fields(g):
            G = np.asarray(ex.evaluate(g, [m[None, :] for m in self._mesh],
                                       [flat_fields[..., j] for j in range(flat_fields.shape[-1])]))
            G = np.broadcast_to(G, (D, self.lattice.size))
            return np.asarray(self.phi_weights @ G.T).T.ravel()
        vals = np.broadcast_to(np.asarray(ex.evaluate(g, self._mesh), dtype=float), (self.lattice.size,))
        col = self.phi_weights @ vals
        return np.tile(col, D)


def compute_Z(dictionary: Sequence[ExtendedDerivative], fields, testing: Sequence[TestingFunction],
              lattice: IntegrationLattice) -> WeakSystem:
    """Assemble ``Z[(d, s), p] = F(E_p, û_d, φ_s)``.

    ``fields`` is a sequence of ``D`` arrays on ``lattice`` (an optional
    trailing axis holds field components).
    """
    dictionary = dictionary if isinstance(dictionary, Dictionary) else Dictionary(dictionary)
    K = min(phi.smoothness for phi in testing)
    if dictionary.max_order > K:
        raise ValueError("derivative order exceeds smoothness")
    U = np.stack([_as_field_array(f, lattice) for f in fields])
    D, S, P = U.shape[0], len(testing), len(dictionary)
    Z = np.empty((D * S, P))
    for p, E in enumerate(dictionary):
        W = _weight_matrix(testing, E.alpha, E.a, lattice)
        H = np.stack([_eval_on_lattice(E.h, lattice, U[d]).ravel() for d in range(D)])
        Z[:, p] = np.asarray(W @ H.T).T.ravel()
    if not np.all(np.isfinite(Z)):
        raise FloatingPointError("non-finite entries in Z")
    return WeakSystem(Z, lattice, list(testing), U, dictionary)


def compute_w(g: ex.Expression, fields, testing: Sequence[TestingFunction],
              lattice: IntegrationLattice) -> np.ndarray:
    """Stand-alone ``w`` (builds the testing-function weights on the fly)."""
    U = np.stack([_as_field_array(f, lattice) for f in fields])
    W = _weight_matrix(testing, (0,) * lattice.ndim, None, lattice)
    out = []
    for d in range(U.shape[0]):
        G = np.broadcast_to(_eval_on_lattice(g, lattice, U[d]), lattice.shape).ravel()
        out.append(W @ G)
    return np.concatenate(out)


def variational_loss(beta, Z, w) -> float:
    """``||Z β - w||²``."""
    r = np.asarray(Z) @ np.asarray(beta, dtype=float) - np.asarray(w, dtype=float)
    return float(r @ r)


# -- ablated objective ------------------------------------------------------


def ablated_design(dictionary: Sequence[ExtendedDerivative], samples, derivative_fn) -> np.ndarray:
    """Pointwise estimates of every ``E_p[v_d]``, stacked to ``(D·|G|, P)``.

    ``derivative_fn(sample, h_values, alpha)`` must return the estimate of
    ``∂^α h`` on the sample grid; ``h_values`` is ``h(x, v)`` there.
    """
    cols = []
    for E in dictionary:
        col = []
        for sample in samples:
            X = sample.grid.mesh()
            U = [sample.values[..., j] for j in range(sample.n_components)]
            hv = np.broadcast_to(np.asarray(ex.evaluate(E.h, X, U)), sample.grid.shape)
            d = hv if E.order == 0 else derivative_fn(sample, hv, E.alpha)
            if E.a is not None:
                d = d * np.asarray(ex.evaluate(E.a, X))
            col.append(np.asarray(d).ravel())
        cols.append(np.concatenate(col))
    return np.stack(cols, axis=1)


def ablated_target(g: ex.Expression, samples) -> np.ndarray:
    """``g(x, v_d(x))`` on every sample grid, stacked."""
    out = []
    for sample in samples:
        X = sample.grid.mesh()
        U = [sample.values[..., j] for j in range(sample.n_components)]
        out.append(np.broadcast_to(np.asarray(ex.evaluate(g, X, U)), sample.grid.shape).ravel())
    return np.concatenate(out)


def mse_loss_ablated(beta, g: ex.Expression, design: np.ndarray, samples) -> float:
    """``Σ_d Σ_x (Σ_p β_p E_p[v_d](x) - g(x, v_d(x)))²``."""
    r = design @ np.asarray(beta, dtype=float) - ablated_target(g, samples)
    return float(r @ r)
