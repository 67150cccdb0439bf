"""Functional sliced inverse regression with neural network predictors."""

from .estimators import CurveDataset
from .pipeline import MethodSpec, fit_pipeline, load_model, predict, save_model
from .spline_basis import SplineBasis, make_basis

__version__ = "0.1.0"

__all__ = [
    "CurveDataset",
    "MethodSpec",
    "SplineBasis",
    "fit_pipeline",
    "load_model",
    "make_basis",
    "predict",
    "save_model",
]
