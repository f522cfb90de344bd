"""Run configuration: a flat INI-style text format.

Sections hold ``key = value`` pairs; lists are comma separated and an empty
value means "use the equation's default". The ``[dictionary]`` section is a
bulleted list of entries in label syntax::

    [run]
    equation = oscillator
    seeds = 0, 1, 2

    [dictionary]
    - dt [u]
    - dt^2 [u]

Unknown sections and keys are rejected, and ``parse(dump(c)) == c``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace
from typing import Any

from .symreg import GPConfig

__all__ = ["ConfigError", "RunConfig", "parse_config", "dump_config", "load_config"]


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


# key -> (section, kind); kinds are parsed by _parse_value
_SCHEMA = {
    "equation": ("run", "str"),
    "seeds": ("run", "ints"),
    "methods": ("run", "strs"),
    "dataset": ("run", "str"),
    "out": ("run", "str"),
    "noise_ratio": ("data", "floats"),
    "n_samples": ("data", "ints"),
    "grid_step": ("data", "floats"),
    "length_scale": ("data", "float"),
    "amplitude": ("data", "float"),
    "n_testing": ("discovery", "int?"),
    "integration_step": ("discovery", "float?"),
    "search": ("discovery", "bool?"),
    "fixed_g": ("discovery", "str"),
    "ridge": ("discovery", "float"),
    "fd_step": ("discovery", "float"),
    "population_size": ("search", "int"),
    "generations": ("search", "int"),
    "tournament_size": ("search", "int"),
    "p_crossover": ("search", "float"),
    "p_subtree_mutation": ("search", "float"),
    "p_hoist_mutation": ("search", "float"),
    "p_point_mutation": ("search", "float"),
    "p_point_replace": ("search", "float"),
    "parsimony_coefficient": ("search", "float"),
    "function_set": ("search", "strs"),
    "const_range": ("search", "floats"),
    "init_depth": ("search", "ints"),
    "max_depth": ("search", "int"),
    "sizes": ("bench", "ints"),
    "instances": ("bench", "int"),
    "rows": ("bench", "int"),
}
_SECTIONS = ("run", "data", "theta", "dictionary", "discovery", "search", "bench")
_GP_KEYS = ("population_size", "generations", "tournament_size", "p_crossover", "p_subtree_mutation",
            "p_hoist_mutation", "p_point_mutation", "p_point_replace", "parsimony_coefficient",
            "function_set", "const_range", "init_depth", "max_depth")

_GP = GPConfig()


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI subcommand needs. Empty tuples and ``None`` defer to the equation."""

    equation: str = "oscillator"
    seeds: tuple = (0, 1, 2, 3, 4)
    methods: tuple = ("dcipher",)
    dataset: str = ""
    out: str = "results"
    noise_ratio: tuple = ()
    n_samples: tuple = ()
    grid_step: tuple = ()
    length_scale: float = 0.4
    amplitude: float = 1.0
    theta: tuple = ()  # ((name, value), ...)
    dictionary: tuple = ()
    n_testing: int | None = None
    integration_step: float | None = None
    search: bool | None = None
    fixed_g: str = ""
    ridge: float = 0.0
    fd_step: float = 1e-3
    population_size: int = _GP.population_size
    generations: int = _GP.generations
    tournament_size: int = _GP.tournament_size
    p_crossover: float = _GP.p_crossover
    p_subtree_mutation: float = _GP.p_subtree_mutation
    p_hoist_mutation: float = _GP.p_hoist_mutation
    p_point_mutation: float = _GP.p_point_mutation
    p_point_replace: float = _GP.p_point_replace
    parsimony_coefficient: float = _GP.parsimony_coefficient
    function_set: tuple = _GP.function_set
    const_range: tuple = _GP.const_range
    init_depth: tuple = _GP.init_depth
    max_depth: int = _GP.max_depth
    sizes: tuple = (2, 3, 4, 5)
    instances: int = 200
    rows: int = 1000

    def gp_config(self, seed: int = 0) -> GPConfig:
        try:
            return GPConfig(**{k: getattr(self, k) for k in _GP_KEYS}, seed=seed)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"[search]: {err}") from err

    def settings(self) -> list[dict]:
        """Cartesian product of the data sweeps; empty sweeps keep the default."""
        out = [{}]
        for key in ("noise_ratio", "n_samples", "grid_step"):
            values = getattr(self, key)
            if values:
                out = [dict(s, **{key: v}) for s in out for v in values]
        theta = dict(self.theta)
        dictionary = tuple(self.dictionary)
        for s in out:
            if theta:
                s["theta"] = theta
            if dictionary:
                s["dictionary"] = dictionary
        return out


def _parse_value(key: str, kind: str, text: str) -> Any:
    text = text.strip()
    optional = kind.endswith("?")
    kind = kind.rstrip("?")
    if optional and text == "":
        return None
    try:
        if kind == "str":
            return text
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            low = text.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(text)
        items = [t.strip() for t in text.split(",")] if text else []
        if kind == "ints":
            return tuple(int(t) for t in items)
        if kind == "floats":
            return tuple(float(t) for t in items)
        if kind == "strs":
            return tuple(items)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None
    raise AssertionError(kind)


def _format_value(kind: str, value: Any) -> str:
    if value is None:
        return ""
    kind = kind.rstrip("?")
    if kind == "bool":
        return "true" if value else "false"
    if kind == "float":
        return repr(float(value))
    if kind in ("ints", "floats", "strs"):
        return ", ".join(repr(float(v)) if kind == "floats" else str(v) for v in value)
    return str(value)


def parse_config(text: str) -> RunConfig:
    """Parse the text format; raises :class:`ConfigError` on any problem."""
    cp = configparser.ConfigParser(allow_no_value=True, delimiters=("=",), interpolation=None,
                                   comment_prefixes=("#", ";"), inline_comment_prefixes=None,
                                   strict=True, empty_lines_in_values=False)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as err:
        raise ConfigError(str(err).splitlines()[0]) from None
    values: dict[str, Any] = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        items = cp.items(section, raw=True)
        if section == "dictionary":
            entries = []
            for key, val in items:
                if val is not None or not key.startswith("-"):
                    raise ConfigError(f"[dictionary] entries must look like '- dt [u]', got {key!r}")
                entries.append(key[1:].strip())
            values["dictionary"] = tuple(entries)
            continue
        if section == "theta":
            try:
                values["theta"] = tuple((k, float(v)) for k, v in items)
            except (TypeError, ValueError):
                raise ConfigError("[theta] values must be numbers") from None
            continue
        for key, val in items:
            spec = _SCHEMA.get(key)
            if spec is None or spec[0] != section:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            if val is None:
                raise ConfigError(f"missing value for {key}")
            values[key] = _parse_value(key, spec[1], val)
    return replace(RunConfig(), **values)


def dump_config(config: RunConfig) -> str:
    """Text form listing every key, so the output is self-contained."""
    lines = []
    for section in _SECTIONS:
        lines.append(f"[{section}]")
        if section == "dictionary":
            lines.extend(f"- {e}" for e in config.dictionary)
        elif section == "theta":
            lines.extend(f"{k} = {float(v)!r}" for k, v in config.theta)
        else:
            for key, (sec, kind) in _SCHEMA.items():
                if sec == section:
                    value = _format_value(kind, getattr(config, key))
                    lines.append(f"{key} = {value}" if value else f"{key} =")
        lines.append("")
    return "\n".join(lines)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from None
