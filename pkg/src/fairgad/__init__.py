"""Fairness-aware unsupervised anomaly detection on attributed graphs."""

from .autodiff import Tape, Tensor
from .detector import DisentangledFairDetector, ReconstructionBaselineDetector
from .generator import GeneratorConfig, InjectionReport, generate_graph
from .graph import AttributedGraph, load_dataset, save_dataset
from .losses import LossWeights
from .metrics import EvalReport, evaluate
from .sparse import SparseMatrix, build_csr, symmetric_normalize
from .training import TrainConfig, TrainedModel, train, train_baseline_with_regularizer

__version__ = "0.1.0"

__all__ = [
    "Tape",
    "Tensor",
    "SparseMatrix",
    "build_csr",
    "symmetric_normalize",
    "AttributedGraph",
    "load_dataset",
    "save_dataset",
    "GeneratorConfig",
    "InjectionReport",
    "generate_graph",
    "LossWeights",
    "TrainConfig",
    "TrainedModel",
    "train",
    "train_baseline_with_regularizer",
    "EvalReport",
    "evaluate",
    "DisentangledFairDetector",
    "ReconstructionBaselineDetector",
    "__version__",
]
