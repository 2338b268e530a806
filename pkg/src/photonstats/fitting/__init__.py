"""Least-squares engine and model-specific fit drivers."""
from .lsq import FitInputError, FitResult, fit_least_squares
from .drivers import *  # noqa: F401,F403
from .drivers import __all__ as _drivers_all

__all__ = ["FitInputError", "FitResult", "fit_least_squares", *_drivers_all]
