"""Genetic programming over closed-form expressions.

A generational loop in the style of Koza: ramped half-and-half
initialisation, tournament selection, subtree crossover, subtree / hoist /
point mutation and reproduction, with the single best individual carried
over unchanged. Every individual draws from its own random stream
``(seed, generation, index)``, so results do not depend on evaluation
order or parallelism.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from .expr import Expression

__all__ = [
    "GPConfig",
    "Individual",
    "EvolutionResult",
    "evolve",
    "penalize",
    "random_tree",
    "tournament_select",
    "subtree_crossover",
    "subtree_mutation",
    "hoist_mutation",
    "point_mutation",
    "choose_operator",
    "FULL_SCALE",
]

log = logging.getLogger(__name__)

ARITY = {"add": 2, "sub": 2, "mul": 2, "div": 2, "sin": 1, "exp": 1, "log": 1, "neg": 1}
DEFAULT_FUNCTIONS = ("add", "sub", "mul", "div", "sin", "exp", "log")


@dataclass(frozen=True)
class GPConfig:
    """Search hyperparameters.

    The defaults are the desk-scale settings; :data:`FULL_SCALE` holds the
    large population used for the published runs.
    """

    population_size: int = 2000
    generations: int = 10
    tournament_size: int = 20
    p_crossover: float = 0.6903
    p_subtree_mutation: float = 0.1330
    p_hoist_mutation: float = 0.0361
    p_point_mutation: float = 0.0905
    p_point_replace: float = 0.05
    parsimony_coefficient: float = 0.05
    function_set: tuple = DEFAULT_FUNCTIONS
    const_range: tuple = (-5.0, 5.0)
    init_depth: tuple = (2, 6)
    max_depth: int = 8
    n_variables: int = 1
    n_fields: int = 1
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        probs = (self.p_crossover, self.p_subtree_mutation, self.p_hoist_mutation, self.p_point_mutation)
        if any(p < 0 for p in probs) or sum(probs) > 1 + 1e-12:
            raise ValueError("operator probabilities must be non-negative and sum to at most 1")
        if self.population_size < 1 or self.generations < 1 or self.tournament_size < 1:
            raise ValueError("population, generations and tournament size must be positive")
        if self.parsimony_coefficient < 0:
            raise ValueError("parsimony coefficient must be non-negative")
        unknown = set(self.function_set) - set(ARITY)
        if unknown or not self.function_set:
            raise ValueError(f"unknown functions {sorted(unknown)}")
        if self.n_variables + self.n_fields < 1:
            raise ValueError("need at least one variable or field terminal")
        lo, hi = self.init_depth
        if not 0 <= lo <= hi <= self.max_depth:
            raise ValueError("init depth range must lie within the depth cap")
        object.__setattr__(self, "function_set", tuple(self.function_set))

    @property
    def p_reproduction(self) -> float:
        return max(0.0, 1.0 - self.p_crossover - self.p_subtree_mutation
                   - self.p_hoist_mutation - self.p_point_mutation)


FULL_SCALE = GPConfig(population_size=15000, generations=20)


@dataclass(frozen=True)
class Individual:
    expression: Expression
    raw_fitness: float
    fitness: float


@dataclass
class EvolutionResult:
    best: Expression
    best_raw: float
    best_fitness: float
    history: list = field(default_factory=list)  # (generation, best raw, best penalised, text)
    n_evaluations: int = 0


def penalize(raw: float, e: Expression, parsimony: float) -> float:
    """``raw · (1 + c · node_count(e))``."""
    if parsimony < 0:
        raise ValueError("parsimony coefficient must be non-negative")
    if raw == 0.0:
        return 0.0
    return raw * (1.0 + parsimony * ex.node_count(e))


# -- tree helpers -----------------------------------------------------------


def _nodes(e: Expression, path=()):
    """Pre-order list of (path, node)."""
    out = [(path, e)]
    for k, c in enumerate(e.children):
        out.extend(_nodes(c, path + (k,)))
    return out


def _get(e: Expression, path):
    for k in path:
        e = e.children[k]
    return e


def _replace(e: Expression, path, new: Expression) -> Expression:
    if not path:
        return new
    kids = list(e.children)
    kids[path[0]] = _replace(kids[path[0]], path[1:], new)
    return Expression(e.op, tuple(kids), e.value)


def _random_terminal(rng: np.random.Generator, config: GPConfig) -> Expression:
    n_terms = config.n_variables + config.n_fields
    k = int(rng.integers(n_terms + 1))
    if k == n_terms:
        return ex.const(float(rng.uniform(*config.const_range)))
    if k < config.n_variables:
        return ex.var(k)
    return ex.fld(k - config.n_variables)


def random_tree(rng: np.random.Generator, config: GPConfig, depth: int, method: str) -> Expression:
    """``'full'`` or ``'grow'`` tree of at most the given depth."""
    n_terms = config.n_variables + config.n_fields + 1
    n_funcs = len(config.function_set)

    def build(d):
        if d < depth:
            choice = int(rng.integers(n_terms + n_funcs))
            if method == "full" or choice < n_funcs:
                op = config.function_set[int(rng.integers(n_funcs))]
                return Expression(op, tuple(build(d + 1) for _ in range(ARITY[op])))
        return _random_terminal(rng, config)

    if depth == 0:
        return _random_terminal(rng, config)
    op = config.function_set[int(rng.integers(n_funcs))]
    return Expression(op, tuple(build(1) for _ in range(ARITY[op])))


def _ramped(rng, config) -> Expression:
    lo, hi = config.init_depth
    depth = int(rng.integers(lo, hi + 1))
    method = "full" if rng.random() < 0.5 else "grow"
    return random_tree(rng, config, depth, method)


def _pick_subtree(rng: np.random.Generator, e: Expression):
    """Koza's 90/10 rule: internal nodes 90% of the time when available."""
    nodes = _nodes(e)
    internal = [n for n in nodes if n[1].children]
    leaves = [n for n in nodes if not n[1].children]
    if internal and rng.random() < 0.9:
        pool = internal
    else:
        pool = leaves
    return pool[int(rng.integers(len(pool)))]


# -- operators --------------------------------------------------------------


def tournament_select(rng: np.random.Generator, population: Sequence[Individual], size: int) -> Individual:
    idx = rng.integers(len(population), size=min(size, len(population)))
    return min((population[i] for i in idx), key=lambda ind: ind.fitness)


def subtree_crossover(rng, parent: Expression, donor: Expression) -> Expression:
    path, _ = _pick_subtree(rng, parent)
    _, piece = _pick_subtree(rng, donor)
    return _replace(parent, path, piece)


def subtree_mutation(rng, parent: Expression, config: GPConfig) -> Expression:
    return subtree_crossover(rng, parent, _ramped(rng, config))


def hoist_mutation(rng, parent: Expression) -> Expression:
    path, sub = _pick_subtree(rng, parent)
    _, inner = _pick_subtree(rng, sub)
    return _replace(parent, path, inner)


def point_mutation(rng, parent: Expression, config: GPConfig) -> Expression:
    """Replace each node with probability ``p_point_replace`` by one of equal arity."""
    by_arity = {1: [f for f in config.function_set if ARITY[f] == 1],
                2: [f for f in config.function_set if ARITY[f] == 2]}

    def rec(e: Expression) -> Expression:
        kids = tuple(rec(c) for c in e.children)
        if rng.random() >= config.p_point_replace:
            return Expression(e.op, kids, e.value) if kids else e
        if not kids:
            return _random_terminal(rng, config)
        options = by_arity[len(kids)]
        if not options:
            return Expression(e.op, kids, e.value)
        return Expression(options[int(rng.integers(len(options)))], kids)

    return rec(parent)


OPERATORS = ("crossover", "subtree", "hoist", "point", "reproduction")


def choose_operator(rng: np.random.Generator, config: GPConfig) -> str:
    r = rng.random()
    bounds = np.cumsum([config.p_crossover, config.p_subtree_mutation,
                        config.p_hoist_mutation, config.p_point_mutation])
    for name, b in zip(OPERATORS, bounds):
        if r < b:
            return name
    return "reproduction"


def _offspring(rng, population, config: GPConfig) -> Expression:
    op = choose_operator(rng, config)
    parent = tournament_select(rng, population, config.tournament_size).expression
    for _ in range(10):
        if op == "crossover":
            donor = tournament_select(rng, population, config.tournament_size).expression
            child = subtree_crossover(rng, parent, donor)
        elif op == "subtree":
            child = subtree_mutation(rng, parent, config)
        elif op == "hoist":
            child = hoist_mutation(rng, parent)
        elif op == "point":
            child = point_mutation(rng, parent, config)
        else:
            child = parent
        if ex.depth(child) <= config.max_depth:
            return child
    return parent


# -- main loop --------------------------------------------------------------


def _safe(fitness, e) -> float:
    try:
        v = float(fitness(e))
    except (ArithmeticError, ValueError, np.linalg.LinAlgError):
        return math.inf
    return v if math.isfinite(v) else math.inf


def evolve(fitness: Callable[[Expression], float], config: GPConfig,
           progress: Callable[[str], None] | None = None,
           names: tuple[Sequence[str], Sequence[str]] | None = None) -> EvolutionResult:
    """Minimise ``penalize(fitness(e), e)`` over expressions.

    ``fitness`` should be total; exceptions and non-finite values are
    treated as infinitely bad. Identical expressions (by text) are
    evaluated once. Returns the best individual ever seen. ``names``
    (variables, fields) only affects the history text.
    """
    variables, fields = names or (None, None)
    cache: dict[str, float] = {}

    def evaluate_all(exprs):
        keys = [ex.to_string(e) for e in exprs]
        todo = {}
        for k, e in zip(keys, exprs):
            if k not in cache and k not in todo:
                todo[k] = e
        if todo:
            items = list(todo.items())
            if config.n_jobs > 1 and len(items) > 1:
                with ThreadPoolExecutor(config.n_jobs) as pool:
                    vals = list(pool.map(lambda kv: _safe(fitness, kv[1]), items))
            else:
                vals = [_safe(fitness, e) for _, e in items]
            cache.update({k: v for (k, _), v in zip(items, vals)})
        out = []
        for k, e in zip(keys, exprs):
            raw = cache[k]
            pen = penalize(raw, e, config.parsimony_coefficient) if math.isfinite(raw) else math.inf
            out.append(Individual(e, raw, pen))
        return out

    exprs = [_ramped(np.random.default_rng([config.seed, 0, i]), config)
             for i in range(config.population_size)]
    population = evaluate_all(exprs)
    best = min(population, key=lambda ind: ind.fitness)
    result = EvolutionResult(best.expression, best.raw_fitness, best.fitness)

    def report(gen, pop_best):
        text = ex.to_string(pop_best.expression, variables, fields)
        line = f"gen {gen}: best raw {pop_best.raw_fitness:.6g} penalized {pop_best.fitness:.6g} expr {text}"
        result.history.append((gen, pop_best.raw_fitness, pop_best.fitness, text))
        log.info(line)
        if progress:
            progress(line)

    report(0, best)
    for gen in range(1, config.generations):
        elite = min(population, key=lambda ind: ind.fitness)
        children = [_offspring(np.random.default_rng([config.seed, gen, i]), population, config)
                    for i in range(config.population_size - 1)]
        population = [elite] + evaluate_all(children)
        gen_best = min(population, key=lambda ind: ind.fitness)
        if gen_best.fitness < result.best_fitness:
            result.best, result.best_raw, result.best_fitness = (
                gen_best.expression, gen_best.raw_fitness, gen_best.fitness)
        report(gen, gen_best)
    result.n_evaluations = len(cache)
    return result
