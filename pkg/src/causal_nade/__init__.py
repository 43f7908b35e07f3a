"""Causal-graph-structured neural density estimation with do-calculus
interventional effect estimators, synthetic benchmark generators, and a
bootstrap/grid-search evaluation harness."""

__version__ = "0.1.0"

from .data import Dataset
from .graph import Dag, Intervention
from .heads import Head
from .model import CausalModel, TrainConfig

__all__ = [
    "__version__",
    "Dag",
    "Dataset",
    "Head",
    "Intervention",
    "CausalModel",
    "TrainConfig",
]
