"""Accuracy and speed of CoLLie against the exact simplex oracle.

Instances follow a balanced recipe: ``A`` is standard normal, ``b = A z'``
with ``z' = l ẑ``, ``||ẑ||_1 = 1`` and ``l ~ U[-1, 3]``, so ``q(0) = |l|``
falls below and above one equally often.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .collie import CollieSolver, _exact_from_gram

__all__ = ["Instance", "instances", "benchmark_collie", "BENCH_FIELDS"]

BENCH_FIELDS = ("n", "index", "case", "q0", "collie_loss", "exact_loss", "relative_error",
                "collie_seconds", "exact_seconds")


@dataclass(frozen=True)
class Instance:
    A: np.ndarray
    b: np.ndarray
    q0: float


def instances(n: int, count: int, m: int = 1000, seed=0) -> Iterator[Instance]:
    """``count`` random problems of size ``m × n``."""
    rng = np.random.default_rng([seed, n])
    for _ in range(count):
        A = rng.standard_normal((m, n))
        z = rng.uniform(-0.5, 0.5, n)
        z /= np.abs(z).sum()
        scale = rng.uniform(-1.0, 3.0)
        yield Instance(A, A @ (scale * z), abs(scale))


def _relative(loss: float, ref: float) -> float:
    if ref <= 1e-300:
        return 0.0 if loss <= 1e-300 else float("inf")
    return (loss - ref) / ref


def benchmark_collie(sizes: Sequence[int] = (2, 3, 4, 5), count: int = 200, m: int = 1000,
                     seed=0) -> list[dict]:
    """One row per instance with both losses, the relative error and timings."""
    rows = []
    for n in sizes:
        for k, inst in enumerate(instances(n, count, m, seed)):
            t0 = time.perf_counter()
            res = CollieSolver(inst.A).solve(inst.b)
            t1 = time.perf_counter()
            gram = inst.A.T @ inst.A
            z, _ = _exact_from_gram(gram, inst.A.T @ inst.b, float(inst.b @ inst.b))
            t2 = time.perf_counter()
            r = inst.A @ z - inst.b
            exact = float(r @ r)
            rows.append({"n": n, "index": k, "case": res.case, "q0": inst.q0, "collie_loss": res.loss,
                         "exact_loss": exact, "relative_error": _relative(res.loss, exact),
                         "collie_seconds": t1 - t0, "exact_seconds": t2 - t1})
    return rows
