"""Input checks shared by the estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array


def check_design(A, b):
    """Validate a least-squares pair ``(A, b)`` and return float copies."""
    A = check_array(A, dtype=np.float64, ensure_2d=True, ensure_min_samples=1)
    b = check_array(b, dtype=np.float64, ensure_2d=False).reshape(-1)
    if b.shape[0] != A.shape[0]:
        raise ValueError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
    return A, b


def check_field_values(values, n_points: int | None = None, name: str = "values"):
    """Field values as a finite float array; optionally check the point count."""
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{name} contains NaN or infinite entries")
    if n_points is not None and values.shape[0] != n_points:
        raise ValueError(f"{name} has {values.shape[0]} points, expected {n_points}")
    return values


def check_positive(value, name: str) -> float:
    value = float(value)
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value
