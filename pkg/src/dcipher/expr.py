"""Closed-form expression trees.

Expressions are immutable trees over independent variables ``x_i``, field
components ``u_j`` and real constants, built from ``+ - * /``, ``sin``,
``exp``, ``log`` and negation. Evaluation uses protected semantics so that
every tree evaluates without raising:

* ``a / b`` is 1 where ``|b| < 1e-6``;
* ``log(a)`` is ``log|a|``, and 0 where ``|a| < 1e-6``;
* ``exp(a)`` clamps its argument at 50.

The module also implements the functional-form machinery used to score
discovered equations: constants become placeholders, placeholder arithmetic
is combined, and a candidate matches a target when its form equals the
target's augmented form ``C1 f(C3 x + C4) + C2`` with some placeholders
dropped.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import sympy

__all__ = [
    "Expression",
    "const",
    "var",
    "fld",
    "sin",
    "exp",
    "log",
    "parse",
    "to_string",
    "to_sympy",
    "from_sympy",
    "evaluate",
    "canonicalize",
    "node_count",
    "depth",
    "uses_fields",
    "FunctionalForm",
    "AugmentedForm",
    "functional_form",
    "augmented_form",
    "matches",
]

UNARY = ("sin", "exp", "log", "neg")
BINARY = ("add", "sub", "mul", "div")
LEAVES = ("const", "var", "field")
_SYMBOL = {"add": "+", "sub": "-", "mul": "*", "div": "/"}

DIV_EPS = 1e-6
LOG_EPS = 1e-6
EXP_MAX = 50.0


@dataclass(frozen=True, eq=True)
class Expression:
    """A node of an expression tree.

    ``op`` is one of ``'const'``, ``'var'``, ``'field'`` (leaves), a unary
    op in ``UNARY`` or a binary op in ``BINARY``. ``value`` holds the
    constant for ``'const'`` and the variable index for ``'var'`` and
    ``'field'``.
    """

    op: str
    children: tuple = ()
    value: float | int | None = None
    _hash: int = field(default=0, init=False, repr=False, compare=False)

    def __post_init__(self):
        arity = len(self.children)
        if self.op in LEAVES:
            if arity:
                raise ValueError(f"leaf {self.op!r} cannot have children")
            if self.value is None:
                raise ValueError(f"leaf {self.op!r} needs a value")
        elif self.op in UNARY:
            if arity != 1:
                raise ValueError(f"{self.op!r} takes one argument")
        elif self.op in BINARY:
            if arity != 2:
                raise ValueError(f"{self.op!r} takes two arguments")
        else:
            raise ValueError(f"unknown op {self.op!r}")
        object.__setattr__(self, "_hash", hash((self.op, self.value, self.children)))

    def __hash__(self):
        return self._hash

    @property
    def is_leaf(self) -> bool:
        return self.op in LEAVES

    @property
    def arity(self) -> int:
        return len(self.children)

    def __str__(self):
        return to_string(self)

    # operator sugar, handy for writing targets by hand
    def __add__(self, other):
        return Expression("add", (self, _wrap(other)))

    def __radd__(self, other):
        return Expression("add", (_wrap(other), self))

    def __sub__(self, other):
        return Expression("sub", (self, _wrap(other)))

    def __rsub__(self, other):
        return Expression("sub", (_wrap(other), self))

    def __mul__(self, other):
        return Expression("mul", (self, _wrap(other)))

    def __rmul__(self, other):
        return Expression("mul", (_wrap(other), self))

    def __truediv__(self, other):
        return Expression("div", (self, _wrap(other)))

    def __rtruediv__(self, other):
        return Expression("div", (_wrap(other), self))

    def __neg__(self):
        return Expression("neg", (self,))


def _wrap(x) -> Expression:
    if isinstance(x, Expression):
        return x
    return const(x)


def const(value: float) -> Expression:
    return Expression("const", value=float(value))


def var(index: int) -> Expression:
    return Expression("var", value=int(index))


def fld(index: int = 0) -> Expression:
    return Expression("field", value=int(index))


def sin(e) -> Expression:
    return Expression("sin", (_wrap(e),))


def exp(e) -> Expression:
    return Expression("exp", (_wrap(e),))


def log(e) -> Expression:
    return Expression("log", (_wrap(e),))


def node_count(e: Expression) -> int:
    return 1 + sum(node_count(c) for c in e.children)


def depth(e: Expression) -> int:
    """Number of edges on the longest root-to-leaf path."""
    if not e.children:
        return 0
    return 1 + max(depth(c) for c in e.children)


def uses_fields(e: Expression) -> bool:
    if e.op == "field":
        return True
    return any(uses_fields(c) for c in e.children)


def max_indices(e: Expression) -> tuple[int, int]:
    """Largest (variable, field) index referenced, ``-1`` if none."""
    if e.op == "var":
        return e.value, -1
    if e.op == "field":
        return -1, e.value
    mv, mf = -1, -1
    for c in e.children:
        a, b = max_indices(c)
        mv, mf = max(mv, a), max(mf, b)
    return mv, mf


# -- evaluation -------------------------------------------------------------


def _protected_div(a, b):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        small = np.abs(b) < DIV_EPS
        return np.where(small, 1.0, a / np.where(small, 1.0, b))


def _protected_log(a):
    with np.errstate(divide="ignore", invalid="ignore"):
        mag = np.abs(a)
        small = mag < LOG_EPS
        return np.where(small, 0.0, np.log(np.where(small, 1.0, mag)))


def _protected_exp(a):
    with np.errstate(over="ignore"):
        return np.exp(np.minimum(a, EXP_MAX))


_UNARY_FN = {"sin": np.sin, "exp": _protected_exp, "log": _protected_log, "neg": np.negative}


def _eval(e: Expression, X, U):
    op = e.op
    if op == "const":
        return e.value
    if op == "var":
        return X[e.value]
    if op == "field":
        return U[e.value]
    if op in _UNARY_FN:
        return _UNARY_FN[op](_eval(e.children[0], X, U))
    a = _eval(e.children[0], X, U)
    b = _eval(e.children[1], X, U)
    with np.errstate(over="ignore", invalid="ignore"):
        if op == "add":
            return a + b
        if op == "sub":
            return a - b
        if op == "mul":
            return a * b
    return _protected_div(a, b)


def evaluate(e: Expression, X: Sequence = (), U: Sequence = ()):
    """Evaluate ``e`` with protected semantics.

    Parameters
    ----------
    X : sequence of array_like
        Independent variables; ``X[i]`` is the value of variable ``i``.
    U : sequence of array_like
        Field components; ``U[j]`` is the value of component ``j``.
        All arrays must broadcast against each other.

    Returns
    -------
    ndarray
        Broadcast shape of all supplied arrays (a 0-d array if none).
        Entries are non-finite only on floating-point overflow.
    """
    mv, mf = max_indices(e)
    if mv >= len(X) or mf >= len(U):
        raise IndexError(f"expression references variable {mv} / field {mf} but got "
                         f"{len(X)} variables and {len(U)} fields")
    arrays = [np.asarray(a, dtype=float) for a in (*X, *U)]
    shape = np.broadcast_shapes(*(a.shape for a in arrays)) if arrays else ()
    X = [np.asarray(a, dtype=float) for a in X]
    U = [np.asarray(a, dtype=float) for a in U]
    out = _eval(e, X, U)
    return np.broadcast_to(np.asarray(out, dtype=float), shape)


# -- canonical form ---------------------------------------------------------


def _sort_key(e: Expression) -> str:
    return to_string(e)


def canonicalize(e: Expression) -> Expression:
    """Fold constant subtrees and order operands of ``+`` and ``*``.

    Only exact floating-point rewrites are applied (commutation and folding
    with the same protected arithmetic), so evaluation is bit-identical.
    """
    if e.is_leaf:
        return e
    kids = tuple(canonicalize(c) for c in e.children)
    if all(k.op == "const" for k in kids):
        return const(float(_eval(Expression(e.op, kids), (), ())))
    if e.op in ("add", "mul") and _sort_key(kids[1]) < _sort_key(kids[0]):
        kids = (kids[1], kids[0])
    return Expression(e.op, kids)


# -- text form --------------------------------------------------------------


def _names(n_vars: int, names: Sequence[str] | None, prefix: str) -> list[str]:
    if names is not None:
        return list(names)
    return [f"{prefix}{i}" for i in range(n_vars)]


def to_string(e: Expression, variables: Sequence[str] | None = None,
              fields: Sequence[str] | None = None) -> str:
    """Fully parenthesised infix text; ``parse(to_string(e)) == e``."""
    mv, mf = max_indices(e)
    vn = _names(mv + 1, variables, "x")
    fn = _names(mf + 1, fields, "u")

    def rec(n: Expression) -> str:
        if n.op == "const":
            return repr(float(n.value))
        if n.op == "var":
            return vn[n.value]
        if n.op == "field":
            return fn[n.value]
        if n.op in UNARY:
            return f"{n.op}({rec(n.children[0])})"
        return f"({rec(n.children[0])} {_SYMBOL[n.op]} {rec(n.children[1])})"

    return rec(e)


_TOKEN = re.compile(r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|inf|nan)"
                    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/(),^]))")


class _Parser:
    def __init__(self, text, variables, fields):
        self.tokens = []
        pos = 0
        text = text.strip()
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                raise ValueError(f"cannot parse expression at {text[pos:]!r}")
            kind = m.lastgroup
            self.tokens.append((kind, m.group(kind)))
            pos = m.end()
            while pos < len(text) and text[pos].isspace():
                pos += 1
        self.i = 0
        self.variables = {n: k for k, n in enumerate(variables)}
        self.fields = {n: k for k, n in enumerate(fields)}

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def take(self, value=None):
        tok = self.peek()
        if tok[0] is None or (value is not None and tok[1] != value):
            raise ValueError(f"expected {value!r}, got {tok[1]!r}")
        self.i += 1
        return tok

    def parse(self):
        e = self.expr()
        if self.i != len(self.tokens):
            raise ValueError(f"unexpected trailing token {self.peek()[1]!r}")
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            op = "add" if self.take()[1] == "+" else "sub"
            e = Expression(op, (e, self.term()))
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = "mul" if self.take()[1] == "*" else "div"
            e = Expression(op, (e, self.unary()))
        return e

    def unary(self):
        kind, val = self.peek()
        if val == "-":
            self.take()
            nxt = self.peek()
            if nxt[0] == "num":
                self.take()
                return const(-float(nxt[1]))
            return Expression("neg", (self.unary(),))
        if val == "+":
            self.take()
            return self.unary()
        return self.atom()

    def atom(self):
        kind, val = self.take()
        if kind == "num":
            return const(float(val))
        if kind == "name":
            if val in UNARY:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return Expression(val, (arg,))
            if val in self.variables:
                return var(self.variables[val])
            if val in self.fields:
                return fld(self.fields[val])
            raise ValueError(f"unknown symbol {val!r}")
        if val == "(":
            e = self.expr()
            self.take(")")
            return e
        raise ValueError(f"unexpected token {val!r}")


def parse(text: str, variables: Sequence[str] = ("x0",), fields: Sequence[str] = ("u0",)) -> Expression:
    """Parse infix text such as ``"5*sin(3*t) - u"``.

    A minus sign directly in front of a number literal is part of the
    constant, so printed constants round-trip exactly.
    """
    return _Parser(text, variables, fields).parse()


# -- sympy bridge -----------------------------------------------------------


def _sym_names(n: int, names, prefix):
    return [sympy.Symbol(s) for s in _names(n, names, prefix)]


def to_sympy(e: Expression, variables: Sequence[str] | None = None,
             fields: Sequence[str] | None = None, numeric: bool = True):
    """Plain (unprotected) symbolic version of ``e``.

    With ``numeric=False`` float constants that are integral stay exact
    integers, which keeps placeholder bookkeeping cleaner.
    """
    mv, mf = max_indices(e)
    vs = _sym_names(max(mv + 1, len(variables or ())), variables, "x")
    fs = _sym_names(max(mf + 1, len(fields or ())), fields, "u")

    def rec(n: Expression):
        if n.op == "const":
            return sympy.Float(n.value) if numeric else sympy.nsimplify(n.value, rational=False)
        if n.op == "var":
            return vs[n.value]
        if n.op == "field":
            return fs[n.value]
        if n.op == "sin":
            return sympy.sin(rec(n.children[0]))
        if n.op == "exp":
            return sympy.exp(rec(n.children[0]))
        if n.op == "log":
            return sympy.log(rec(n.children[0]))
        if n.op == "neg":
            return -rec(n.children[0])
        a, b = (rec(c) for c in n.children)
        if n.op == "add":
            return a + b
        if n.op == "sub":
            return a - b
        if n.op == "mul":
            return a * b
        if b.is_number and abs(b) < DIV_EPS:
            return sympy.Integer(1)  # the protected quotient
        return a / b

    return rec(e)


def from_sympy(s, variables: Sequence[str], fields: Sequence[str] = ()) -> Expression:
    """Convert a sympy expression over the given symbol names back to a tree."""
    vmap = {sympy.Symbol(n): var(i) for i, n in enumerate(variables)}
    fmap = {sympy.Symbol(n): fld(i) for i, n in enumerate(fields)}

    def rec(x):
        if x in vmap:
            return vmap[x]
        if x in fmap:
            return fmap[x]
        if x.is_Number:
            return const(float(x))
        if x.is_Add:
            parts = [rec(a) for a in x.args]
            out = parts[0]
            for p in parts[1:]:
                out = Expression("add", (out, p))
            return out
        if x.is_Mul:
            parts = [rec(a) for a in x.args]
            out = parts[0]
            for p in parts[1:]:
                out = Expression("mul", (out, p))
            return out
        if x.is_Pow:
            base, ex = x.args
            if ex.is_Integer:
                k = int(ex)
                b = rec(base)
                out = b
                for _ in range(abs(k) - 1):
                    out = Expression("mul", (out, b))
                if k < 0:
                    out = Expression("div", (const(1.0), out))
                if k == 0:
                    out = const(1.0)
                return out
            if base == sympy.E:
                return exp(rec(ex))
            return exp(Expression("mul", (rec(ex), log(rec(base)))))
        if isinstance(x, sympy.sin):
            return sin(rec(x.args[0]))
        if isinstance(x, sympy.exp):
            return exp(rec(x.args[0]))
        if isinstance(x, sympy.log):
            return log(rec(x.args[0]))
        raise ValueError(f"cannot convert {x!r} to an Expression")

    return rec(sympy.sympify(s))


# -- functional forms -------------------------------------------------------

PLACEHOLDER = sympy.Symbol("C")
_MAX_EXPAND_OPS = 400


def _is_const(s, variables) -> bool:
    return not (s.free_symbols & variables)


def _collapse(s, variables):
    """Replace constant subtrees by the placeholder and merge placeholders."""
    if _is_const(s, variables):
        return PLACEHOLDER
    if s.is_Symbol:
        return s
    if s.is_Add or s.is_Mul:
        args = [_collapse(a, variables) for a in s.args]
        has_c = any(a == PLACEHOLDER for a in args)
        rest = [a for a in args if a != PLACEHOLDER]
        out = s.func(*rest) if rest else sympy.S.Zero if s.is_Add else sympy.S.One
        if has_c:
            out = out + PLACEHOLDER if s.is_Add else out * PLACEHOLDER
        return out
    if s.is_Pow:
        base, ex = s.args
        base = _collapse(base, variables)
        if not _is_const(ex, variables):
            ex = _collapse(ex, variables)
        elif not ex.is_Integer:
            ex = PLACEHOLDER
        return base ** ex
    return s.func(*[_collapse(a, variables) for a in s.args])


def _normalize(s, variables, max_iter: int = 12):
    prev = None
    for _ in range(max_iter):
        if s == prev:
            break
        prev = s
        if sympy.count_ops(s) <= _MAX_EXPAND_OPS:
            s = sympy.expand(s, power_exp=False)
        s = _collapse(s, variables)
    return s


def _label(s) -> str:
    """String with successive placeholder occurrences numbered ``C1, C2...``."""
    text = sympy.sstr(s, order="none")
    counter = itertools.count(1)
    return re.sub(r"\bC\b", lambda m: f"C{next(counter)}", text)


@dataclass(frozen=True)
class FunctionalForm:
    """Expression with every numeric constant replaced by a placeholder."""

    expr: object  # sympy expression over variable symbols and PLACEHOLDER
    variables: frozenset

    @cached_property
    def n_placeholders(self) -> int:
        return _count_placeholders(self.expr)

    def __str__(self):
        return _label(self.expr)

    def key(self) -> str:
        return sympy.srepr(self.expr)


@dataclass(frozen=True)
class AugmentedForm(FunctionalForm):
    """Functional form of ``C1 f(C3 x + C4) + C2``; every placeholder optional.

    ``variants`` holds the normalised forms obtained by dropping any subset
    of the wrap placeholders before expansion (scales to 1, shifts to 0).
    """

    variants: tuple = ()

    @cached_property
    def optional(self) -> tuple[bool, ...]:
        return (True,) * self.n_placeholders


def _count_placeholders(s) -> int:
    if s == PLACEHOLDER:
        return 1
    return sum(_count_placeholders(a) for a in s.args)


def _symbols_for(e: Expression, variables, fields):
    mv, mf = max_indices(e)
    vn = _names(max(mv + 1, len(variables or ())), variables, "x")
    fn = _names(max(mf + 1, len(fields or ())), fields, "u")
    return vn, fn


def functional_form(e, variables: Sequence[str] | None = None,
                    fields: Sequence[str] | None = None) -> FunctionalForm:
    """Constants become placeholders; placeholder arithmetic is combined.

    ``e`` may be an :class:`Expression` or an existing :class:`FunctionalForm`
    (the operation is idempotent).
    """
    if isinstance(e, FunctionalForm):
        return FunctionalForm(_normalize(e.expr, e.variables), e.variables)
    vn, fn = _symbols_for(e, variables, fields)
    syms = frozenset(sympy.Symbol(n) for n in (*vn, *fn))
    s = to_sympy(e, vn, fn)
    return FunctionalForm(_normalize(s, syms), syms)


def augmented_form(f: Expression, variables: Sequence[str] | None = None,
                   fields: Sequence[str] | None = None) -> AugmentedForm:
    """Augment, replace and combine: the form of ``C1 f(C3 x + C4) + C2``.

    Every independent variable occurring in ``f`` gets its own affine wrap;
    field components are not wrapped.
    """
    vn, fn = _symbols_for(f, variables, fields)
    syms = frozenset(sympy.Symbol(n) for n in (*vn, *fn))
    s = to_sympy(f, vn, fn)
    scales, shifts, wraps = [sympy.Symbol("_a")], [sympy.Symbol("_b")], {}
    for name in vn:
        v = sympy.Symbol(name)
        if v in s.free_symbols:
            a, b = sympy.Symbol(f"_a_{name}"), sympy.Symbol(f"_b_{name}")
            scales.append(a)
            shifts.append(b)
            wraps[v] = a * v + b
    raw = scales[0] * s.xreplace(wraps) + shifts[0]
    sites = [(w, sympy.S.One) for w in scales] + [(w, sympy.S.Zero) for w in shifts]
    variants = []
    for mask in itertools.product((False, True), repeat=len(sites)):
        fixed = {w: neutral if drop else PLACEHOLDER for (w, neutral), drop in zip(sites, mask)}
        variants.append(_normalize(raw.xreplace(fixed), syms))
    full = variants[0]
    unique = tuple({sympy.srepr(v): v for v in variants}.values())
    return AugmentedForm(full, syms, unique)


def _placeholder_sites(s, path=()):
    """Paths to placeholder occurrences together with their neutral value."""
    sites = []
    for k, a in enumerate(s.args):
        if a == PLACEHOLDER:
            if s.is_Add:
                sites.append((path + (k,), sympy.S.Zero))
            elif s.is_Mul or (s.is_Pow and k == 1):
                sites.append((path + (k,), sympy.S.One))
        else:
            sites.extend(_placeholder_sites(a, path + (k,)))
    return sites


def _replace_many(s, chosen: dict, path=()):
    """Replace all chosen paths at once, rebuilding bottom-up."""
    if path in chosen:
        return chosen[path]
    if not s.args or not any(p[:len(path)] == path for p in chosen):
        return s
    return s.func(*(_replace_many(a, chosen, path + (k,)) for k, a in enumerate(s.args)))


def _drop_variants(form: FunctionalForm, max_sites: int = 14):
    sites = _placeholder_sites(form.expr)
    if len(sites) > max_sites:
        sites = sites[:max_sites]
    seen = set()
    for mask in itertools.product((False, True), repeat=len(sites)):
        chosen = {path: neutral for (path, neutral), drop in zip(sites, mask) if drop}
        s = _normalize(_replace_many(form.expr, chosen), form.variables)
        k = sympy.srepr(s)
        if k not in seen:
            seen.add(k)
            yield k


def matches(candidate, target: AugmentedForm, variables: Sequence[str] | None = None,
            fields: Sequence[str] | None = None) -> bool:
    """Does the candidate's functional form instantiate the target's form?

    Placeholders of the target may be absent from the candidate: an absent
    additive placeholder counts as 0, a multiplicative one as 1.
    """
    if isinstance(candidate, Expression):
        cand = functional_form(candidate, variables, fields)
    else:
        cand = functional_form(candidate)
    key = cand.key()
    forms = target.variants if isinstance(target, AugmentedForm) and target.variants else (target.expr,)
    for form in forms:
        if any(k == key for k in _drop_variants(FunctionalForm(form, target.variables))):
            return True
    return False
