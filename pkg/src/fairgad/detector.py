"""sklearn-style estimators wrapping the trainers.

Both detectors follow the fit / decision_function / predict convention and
inherit ``get_params``/``set_params`` from ``BaseEstimator``, so they drop
into pipelines, grid search over their hyperparameters, and ``clone``.
The input is an :class:`~fairgad.graph.AttributedGraph` rather than a
feature matrix; scoring is transductive by default (pass no graph to score
the fitted one) but new graphs with the same attribute width are accepted.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .graph import AttributedGraph, check_graph
from .losses import LossWeights
from .metrics import predict_labels
from .training import (
    TrainConfig,
    score_graph,
    train,
    train_baseline_with_regularizer,
)

__all__ = ["DisentangledFairDetector", "ReconstructionBaselineDetector"]


class NotFittedError(RuntimeError):
    pass


def _check_fitted(est, attr: str) -> None:
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted yet; call fit first")


class DisentangledFairDetector(BaseEstimator):
    """Unsupervised graph anomaly detector with disentangled sensitive and
    sensitive-free latents and a score/sensitive decorrelation penalty.

    Parameters mirror the training configuration; ``contamination`` sets the
    flagged fraction used by :meth:`predict`.
    """

    def __init__(self, alpha: float = 2.0, gamma: float = 0.5, beta: float = 1.0,
                 learning_rate: float = 0.001, phase1_max_epochs: int = 100,
                 patience: int = 20, phase2_epochs: int = 100,
                 hidden_dim: int = 64, latent_dim: int = 64,
                 variant: str = "FULL", shuffle_policy: str = "per_epoch",
                 reduction: str = "mean", corr_on: str = "probability",
                 contamination: float = 0.1, seed: int = 0):
        self.alpha = alpha
        self.gamma = gamma
        self.beta = beta
        self.learning_rate = learning_rate
        self.phase1_max_epochs = phase1_max_epochs
        self.patience = patience
        self.phase2_epochs = phase2_epochs
        self.hidden_dim = hidden_dim
        self.latent_dim = latent_dim
        self.variant = variant
        self.shuffle_policy = shuffle_policy
        self.reduction = reduction
        self.corr_on = corr_on
        self.contamination = contamination
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            phase1_max_epochs=self.phase1_max_epochs,
            patience=self.patience,
            phase2_epochs=self.phase2_epochs,
            weights=LossWeights(alpha=self.alpha, gamma=self.gamma, beta=self.beta),
            variant=self.variant,
            seed=self.seed,
            shuffle_policy=self.shuffle_policy,
            reduction=self.reduction,
            hidden_dim=self.hidden_dim,
            latent_dim=self.latent_dim,
            corr_on=self.corr_on,
        ).validate()

    def fit(self, G: AttributedGraph, y=None):
        check_graph(G)
        cfg = self._train_config()
        self.model_ = train(G, cfg)
        self.scores_ = self.model_.scores
        self.n_attrs_ = G.n_attrs
        return self

    def decision_function(self, G: AttributedGraph | None = None) -> np.ndarray:
        """Anomaly scores (higher means more anomalous)."""
        _check_fitted(self, "model_")
        if G is None:
            return self.scores_.copy()
        check_graph(G)
        if G.n_attrs != self.n_attrs_:
            raise ValueError(f"graph has {G.n_attrs} attributes, model expects {self.n_attrs_}")
        return score_graph(G, self.model_.params, self._train_config())

    def score_samples(self, G: AttributedGraph | None = None) -> np.ndarray:
        # sklearn convention: larger is more normal
        return -self.decision_function(G)

    def predict(self, G: AttributedGraph | None = None) -> np.ndarray:
        """Binary labels: the top ``contamination`` fraction is flagged 1."""
        scores = self.decision_function(G)
        k = int(round(self.contamination * len(scores)))
        return predict_labels(scores, k)

    def fit_predict(self, G: AttributedGraph, y=None) -> np.ndarray:
        return self.fit(G).predict()


class ReconstructionBaselineDetector(BaseEstimator):
    """Joint attribute/structure reconstruction detector, optionally with a
    fairness regularizer (``none``, ``fairod``, ``correlation``, ``hin``)."""

    def __init__(self, regularizer: str = "none", lam: float = 1.0,
                 adcg_weight: float = 0.0, learning_rate: float = 0.001,
                 max_epochs: int = 100, patience: int = 20,
                 hidden_dim: int = 64, latent_dim: int = 64,
                 reduction: str = "mean", contamination: float = 0.1,
                 seed: int = 0):
        self.regularizer = regularizer
        self.lam = lam
        self.adcg_weight = adcg_weight
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.patience = patience
        self.hidden_dim = hidden_dim
        self.latent_dim = latent_dim
        self.reduction = reduction
        self.contamination = contamination
        self.seed = seed

    def fit(self, G: AttributedGraph, y=None, base_scores: np.ndarray | None = None):
        check_graph(G)
        cfg = TrainConfig(
            learning_rate=self.learning_rate,
            phase1_max_epochs=self.max_epochs,
            patience=self.patience,
            seed=self.seed,
            reduction=self.reduction,
            hidden_dim=self.hidden_dim,
            latent_dim=self.latent_dim,
            baseline_lambda=self.lam,
            baseline_adcg_weight=self.adcg_weight,
        ).validate()
        self.model_ = train_baseline_with_regularizer(G, self.regularizer, cfg,
                                                      o_base=base_scores)
        self.scores_ = self.model_.scores
        return self

    def decision_function(self, G: AttributedGraph | None = None) -> np.ndarray:
        _check_fitted(self, "model_")
        if G is not None:
            raise ValueError("the reconstruction baseline scores its training graph only")
        return self.scores_.copy()

    def predict(self, G: AttributedGraph | None = None) -> np.ndarray:
        scores = self.decision_function(G)
        k = int(round(self.contamination * len(scores)))
        return predict_labels(scores, k)

    def fit_predict(self, G: AttributedGraph, y=None) -> np.ndarray:
        return self.fit(G).predict()
