import math

import mpmath
import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from dcipher import expr as ex
from dcipher.symreg import GPConfig, random_tree

t, x, u = ex.var(0), ex.var(1), ex.fld(0)
V1, F1 = ("x",), ("u",)


@st.composite
def trees(draw, max_depth=3, n_variables=1, n_fields=1):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    depth = draw(st.integers(0, max_depth))
    method = draw(st.sampled_from(["full", "grow"]))
    cfg = GPConfig(n_variables=n_variables, n_fields=n_fields, init_depth=(0, max_depth))
    return random_tree(np.random.default_rng(seed), cfg, depth, method)


def test_evaluate_agrees_with_mpmath():
    e = 1.3 * ex.exp(2.0 * t)
    xs = np.linspace(-1, 2, 7)
    got = ex.evaluate(e, [xs])
    for xi, gi in zip(xs, got):
        mpmath.mp.dps = 30
        ref = mpmath.mpf("1.3") * mpmath.exp(2 * mpmath.mpf(float(xi)))
        assert gi == pytest.approx(float(ref), rel=1e-15)


def test_protected_operations():
    assert ex.evaluate(t / t, [0.0]) == 1.0
    assert ex.evaluate(ex.log(t), [0.0]) == 0.0
    assert ex.evaluate(ex.log(t), [-math.e]) == pytest.approx(1.0)
    assert ex.evaluate(ex.exp(t), [1e6]) == pytest.approx(math.exp(50.0))
    assert ex.evaluate(t / (t - 1.0), [1.0 + 1e-8]) == 1.0


def test_evaluate_broadcasts_and_checks_arity():
    out = ex.evaluate(t + u, [np.zeros((3, 1))], [np.ones((1, 4))])
    assert out.shape == (3, 4)
    assert ex.evaluate(ex.const(2.0)).shape == ()
    with pytest.raises(IndexError):
        ex.evaluate(x, [1.0])


def test_tree_measures():
    e = ex.sin(3.0 * t) + u
    assert ex.node_count(e) == 6
    assert ex.depth(e) == 3
    assert ex.depth(t) == 0
    assert ex.uses_fields(e) and not ex.uses_fields(ex.sin(t))
    assert ex.max_indices(e) == (0, 0)


def test_text_form_is_fully_parenthesised():
    e = ex.sin(3.0 * t) - u / 2.0
    assert ex.to_string(e, V1, F1) == "(sin((3.0 * x)) - (u / 2.0))"
    assert ex.parse("sin(3*x) - u/2", V1, F1) == ex.sin(ex.const(3.0) * t) - u / ex.const(2.0)


def test_parse_rejects_garbage():
    with pytest.raises(ValueError):
        ex.parse("sin(x", V1, F1)
    with pytest.raises(ValueError):
        ex.parse("y + 1", V1, F1)


def test_canonicalize_folds_constants_and_sorts():
    e = (ex.const(2.0) * ex.const(3.0)) * t + u
    c = ex.canonicalize(e)
    assert ex.canonicalize(u + t * ex.const(6.0)) == c
    xs = np.linspace(0, 1, 5)
    np.testing.assert_array_equal(ex.evaluate(e, [xs], [xs]), ex.evaluate(c, [xs], [xs]))


def test_worked_example_functional_forms():
    assert str(ex.functional_form(1.3 * ex.exp(2.0 * t), V1)) == "C1*exp(C2*x)"
    assert str(ex.augmented_form(1.3 * ex.exp(2.0 * t), V1)) == "C1 + C2*exp(C3 + C4*x)"


@pytest.mark.parametrize("text", ["sin(3*x) + 0.001", "1.001*sin(3*x)", "sin(3*x + 0.001)",
                                  "sin(3.5*x)", "2*sin(x + 1) - 4", "sin(x)"])
def test_perturbations_match_sine_target(text):
    target = ex.augmented_form(ex.sin(3.0 * t), V1)
    assert ex.matches(ex.parse(text, V1, F1), target, V1, F1)


@pytest.mark.parametrize("text", ["x*x", "exp(x)", "sin(x)*x", "sin(exp(x))"])
def test_other_shapes_do_not_match_sine_target(text):
    target = ex.augmented_form(ex.sin(3.0 * t), V1)
    assert not ex.matches(ex.parse(text, V1, F1), target, V1, F1)


def test_field_terms_are_not_wrapped():
    V, F = ("t",), ("u",)
    target = ex.augmented_form(ex.parse("(5*sin(3*t) - 16*u)/5", V, F), V, F)
    assert ex.matches(ex.parse("sin(3*t) - 3.2*u", V, F), target, V, F)
    assert not ex.matches(ex.parse("sin(3*t)", V, F), target, V, F)


def test_two_variable_wraps():
    V = ("t", "x")
    target = ex.augmented_form(ex.parse("2*exp(t)*sin(3*t)", V, ()), V, ())
    assert ex.matches(ex.parse("2*exp(1.01*t)*sin(2.9*t)", V, ()), target, V, ())


def test_sympy_bridge_round_trip():
    e = ex.parse("exp(-1.5*x)*u + log(x)", V1, F1)
    back = ex.from_sympy(ex.to_sympy(e, V1, F1), V1, F1)
    xs = np.linspace(0.5, 2, 6)
    np.testing.assert_allclose(ex.evaluate(back, [xs], [xs]), ex.evaluate(e, [xs], [xs]), rtol=1e-12)


@settings(max_examples=200, deadline=None)
@given(trees(max_depth=4, n_variables=2, n_fields=2))
def test_text_round_trip_is_exact(e):
    names = (("t", "x"), ("u1", "u2"))
    text = ex.to_string(e, *names)
    back = ex.parse(text, *names)
    assert back == e
    assert ex.to_string(back, *names) == text


@settings(max_examples=200, deadline=None)
@given(trees(max_depth=4), st.lists(st.floats(-3, 3), min_size=1, max_size=5))
def test_evaluation_is_total(e, pts):
    xs = np.array(pts)
    out = ex.evaluate(e, [xs], [xs[::-1]])
    assert out.shape == xs.shape
    assert not np.any(np.isnan(out))


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(trees(max_depth=3))
def test_expression_matches_its_own_augmented_form(e):
    assert ex.matches(e, ex.augmented_form(e, V1, F1), V1, F1)


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(trees(max_depth=3))
def test_functional_form_is_idempotent(e):
    f = ex.functional_form(e, V1, F1)
    assert ex.functional_form(f).key() == f.key()


@pytest.mark.parametrize("text", ["u + 0", "x - 0*u", "x / 0", "0 + 0"])
def test_zero_constants_have_augmented_forms(text):
    e = ex.parse(text, V1, F1)
    assert ex.matches(e, ex.augmented_form(e, V1, F1), V1, F1)
