"""Uncertainty-aware collaborative filtering with a multi-output GP and paired inducing points."""

__version__ = "0.1.0"

from .data import Dataset, RatingTriple, kfold_split, parse_ratings
from .evaluation import PredictionSet, QpCurve, mae, qp_curve, rmse
from .model import ModelConfig, ModelState, init_model
from .svgp import elbo_minibatch, predict
from .trainer import TrainOptions, train

__all__ = [
    "Dataset",
    "RatingTriple",
    "kfold_split",
    "parse_ratings",
    "PredictionSet",
    "QpCurve",
    "mae",
    "qp_curve",
    "rmse",
    "ModelConfig",
    "ModelState",
    "init_model",
    "elbo_minibatch",
    "predict",
    "TrainOptions",
    "train",
]
