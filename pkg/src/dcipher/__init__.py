"""Closed-form differential equation discovery from noisy field data.

The variational pipeline lives in :mod:`dcipher.pipeline`; the constrained
least-squares solver in :mod:`dcipher.collie`.
"""

from .collie import CollieRegressor, CollieSolver, exact_solve, solve
from .pipeline import AblatedDCipher, DCipher, beta_rmse, dcipher, dcipher_ablated, success_indicator
from .smooth import GaussianProcessSmoother
from .symreg import GPConfig

__all__ = [
    "AblatedDCipher",
    "CollieRegressor",
    "CollieSolver",
    "DCipher",
    "GPConfig",
    "GaussianProcessSmoother",
    "beta_rmse",
    "dcipher",
    "dcipher_ablated",
    "exact_solve",
    "solve",
    "success_indicator",
]

__version__ = "0.1.0"
