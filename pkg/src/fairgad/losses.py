"""Objective terms for both training phases and the baseline regularizers.

Everything follows the minimization convention: reconstruction terms are
negative log-likelihoods, the disentanglement term is the adversary's
density-ratio estimate, and fairness penalties are nonnegative.  The
``reduction`` switch selects mean- (default) or sum-reduced reconstruction
terms; mean reduction keeps the weight grids comparable across graph sizes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import AttributedGraph, matrix_std
from .sparse import adjacency_std

__all__ = [
    "LossWeights",
    "LossReport",
    "compute_epsilon_mix",
    "attribute_mse",
    "structure_bce",
    "recon_loss",
    "kl_gaussian",
    "disentangle_loss",
    "predictiveness_loss",
    "predictiveness_from_logits",
    "total_loss",
    "adversary_loss",
    "anomaly_scores",
    "correlation_constraint",
    "ad_loss",
    "fairod_dp",
    "fairod_adcg",
    "correlation_regularizer",
    "hin_dp",
]

_LN2 = float(np.log(2.0))


@dataclass
class LossWeights:
    """Weight coefficients for the phase-1 and phase-2 objectives.

    ``epsilon_mix`` is not configured; it is recomputed from the input graph
    as std(X) / (std(X) + std(A)) and stored here for audit.
    """

    alpha: float = 2.0
    gamma: float = 0.5
    beta: float = 1.0
    epsilon_mix: float | None = None

    def validate(self) -> "LossWeights":
        for name in ("alpha", "gamma", "beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.epsilon_mix is not None and not (0.0 <= self.epsilon_mix <= 1.0):
            raise ValueError("epsilon_mix must lie in [0, 1]")
        return self


@dataclass
class LossReport:
    """Per-term scalar values for one optimization step."""

    rec_x: float = 0.0
    rec_a: float = 0.0
    kl: float = 0.0
    dis: float = 0.0
    pre: float = 0.0
    adv: float = 0.0
    corr: float = 0.0
    total: float = 0.0

    def terms(self) -> dict:
        return {
            "rec_x": self.rec_x, "rec_a": self.rec_a, "kl": self.kl,
            "dis": self.dis, "pre": self.pre, "adv": self.adv,
            "corr": self.corr, "total": self.total,
        }


def compute_epsilon_mix(g: AttributedGraph) -> float:
    """Structure/attribute mixing weight from the data's own scales."""
    std_x = matrix_std(g.attributes.data)
    std_a = adjacency_std(g.adjacency)
    denom = std_x + std_a
    if denom == 0.0:
        return 0.5
    return std_x / denom


def _reduce(t: Tensor, reduction: str) -> Tensor:
    if reduction == "mean":
        return ad.tmean(t)
    if reduction == "sum":
        return ad.tsum(t)
    raise ValueError(f"unknown reduction {reduction!r}")


def attribute_mse(x: Tensor, x_hat: Tensor, reduction: str = "mean") -> Tensor:
    if x.shape != x_hat.shape:
        raise ad.ShapeError(f"attribute shapes differ: {x.shape} vs {x_hat.shape}")
    return _reduce(ad.square(ad.sub(x_hat, x)), reduction)


def structure_bce(a_dense, a_logits: Tensor, reduction: str = "mean") -> Tensor:
    return _reduce(ad.bce_with_logits(a_logits, a_dense), reduction)


def recon_loss(x: Tensor, x_hat: Tensor, a_dense, a_logits: Tensor,
               epsilon_mix: float, reduction: str = "mean") -> Tensor:
    """(1 - eps) * attribute MSE + eps * structure cross-entropy."""
    if not (0.0 <= epsilon_mix <= 1.0):
        raise ValueError("epsilon_mix must lie in [0, 1]")
    rec_x = attribute_mse(x, x_hat, reduction)
    rec_a = structure_bce(a_dense, a_logits, reduction)
    return ad.add(ad.scale(rec_x, 1.0 - epsilon_mix), ad.scale(rec_a, epsilon_mix))


def kl_gaussian(mu: Tensor, log_sigma: Tensor, reduction: str = "mean") -> Tensor:
    """KL from N(mu, sigma^2) to the standard Gaussian, summed over latent
    dimensions and averaged over nodes (mean mode)."""
    if mu.shape != log_sigma.shape:
        raise ad.ShapeError(f"mu/log_sigma shapes differ: {mu.shape} vs {log_sigma.shape}")
    sigma_sq = ad.exp(ad.scale(log_sigma, 2.0))
    per_entry = ad.scale(
        ad.add_scalar(ad.sub(ad.add(ad.square(mu), sigma_sq), ad.scale(log_sigma, 2.0)), -1.0),
        0.5,
    )
    total = ad.tsum(per_entry)
    if reduction == "mean":
        return ad.scale(total, 1.0 / mu.shape[0])
    return total


def disentangle_loss(adversary_logits_true: Tensor) -> Tensor:
    """Mean logit over true pairs: the adversary-side estimate of the KL
    between the joint latent posterior and the product of its marginals."""
    return ad.tmean(adversary_logits_true)


def predictiveness_loss(s, probs: Tensor, reduction: str = "mean") -> Tensor:
    """Binary cross-entropy between the sensitive attribute and its
    predicted Bernoulli parameter; probabilities are clamped away from
    exactly 0/1 (equivalently, use the fused-logit form)."""
    s_col = np.asarray(s, dtype=np.float64).reshape(probs.shape)
    p = ad.clip(probs, 1e-12, 1.0 - 1e-12)
    ll = ad.add(
        ad.hadamard(ad.constant(s_col), ad.log(p)),
        ad.hadamard(ad.constant(1.0 - s_col), ad.log(ad.add_scalar(ad.scale(p, -1.0), 1.0))),
    )
    return ad.scale(_reduce(ll, reduction), -1.0)


def predictiveness_from_logits(s, z_s: Tensor, reduction: str = "mean") -> Tensor:
    """Same loss computed from raw logits; stable for any magnitude."""
    s_col = np.asarray(s, dtype=np.float64).reshape(z_s.shape)
    return _reduce(ad.bce_with_logits(z_s, s_col), reduction)


def total_loss(rec: Tensor, kl: Tensor, dis: Tensor, pre: Tensor,
               weights: LossWeights) -> Tensor:
    return ad.add(
        ad.add(rec, kl),
        ad.add(ad.scale(dis, weights.gamma), ad.scale(pre, weights.alpha)),
    )


def adversary_loss(logits_true: Tensor, logits_fake: Tensor) -> Tensor:
    """Binary cross-entropy pushing true pairs to label 1 and fake pairs to
    label 0; minimized by the adversary alone."""
    if logits_true.size == 0 or logits_fake.size == 0:
        raise ad.ShapeError("adversary batches must be nonempty")
    true_term = ad.tmean(ad.bce_with_logits(logits_true, np.ones(logits_true.shape)))
    fake_term = ad.tmean(ad.bce_with_logits(logits_fake, np.zeros(logits_fake.shape)))
    return ad.add(true_term, fake_term)


def anomaly_scores(x: Tensor, x_tilde: Tensor) -> Tensor:
    """Per-node squared reconstruction error."""
    if x.shape != x_tilde.shape:
        raise ad.ShapeError(f"shapes differ: {x.shape} vs {x_tilde.shape}")
    return ad.frobenius_sq_rows(ad.sub(x, x_tilde))


def _pearson_abs(a: Tensor, b: Tensor) -> Tensor:
    """|Pearson correlation| of two equal-length vectors, or a constant 0
    when either vector has no variance."""
    n = a.shape[0]
    if n < 2:
        raise ad.ShapeError("correlation needs at least two entries")
    ac = ad.sub(a, ad.tmean(a))
    bc = ad.sub(b, ad.tmean(b))
    var_a = ad.tmean(ad.square(ac))
    var_b = ad.tmean(ad.square(bc))
    if float(var_a.data) == 0.0 or float(var_b.data) == 0.0:
        return ad.constant(0.0)
    cov = ad.tmean(ad.hadamard(ac, bc))
    return ad.absolute(ad.div(cov, ad.sqrt(ad.hadamard(var_a, var_b))))


def _as_vector(t) -> Tensor:
    t = ad.as_tensor(t)
    if t.ndim == 2 and t.shape[1] == 1:
        return ad.reshape(t, (t.shape[0],))
    if t.ndim != 1:
        raise ad.ShapeError(f"expected a vector, got shape {t.shape}")
    return t


def correlation_constraint(o: Tensor, s_pred) -> Tensor:
    """Absolute correlation between anomaly scores and the predicted
    sensitive attribute; zero-variance inputs yield exactly 0."""
    return _pearson_abs(_as_vector(o), _as_vector(s_pred))


def ad_loss(o: Tensor, corr: Tensor, beta: float, reduction: str = "mean") -> Tensor:
    """Scoring-phase objective: reduced reconstruction error plus the
    weighted correlation penalty."""
    return ad.add(_reduce(o, reduction), ad.scale(corr, beta))


# ---------------------------------------------------------------------------
# regularizers attached to the reconstruction baseline


def _group_indices(s) -> tuple:
    s = np.asarray(s)
    return np.flatnonzero(s == 0), np.flatnonzero(s == 1)


def fairod_dp(o: Tensor, s) -> Tensor:
    """Demographic-parity regularizer: |Pearson(scores, sensitive)|."""
    g0, g1 = _group_indices(s)
    if len(g0) == 0 or len(g1) == 0:
        warnings.warn("only one sensitive group present; parity term is 0", stacklevel=2)
        return ad.constant(0.0)
    s_vec = np.asarray(s, dtype=np.float64)
    return _pearson_abs(_as_vector(o), ad.constant(s_vec))


def fairod_adcg(o: Tensor, o_base, s) -> Tensor:
    """Group-fidelity regularizer: per group, one minus a discounted
    cumulative gain of the base-model scores, with rank positions replaced
    by a smooth sigmoid rank estimated from the current scores.

    ``o_base`` is constant (scores of the unregularized base run); only the
    current scores carry gradient.
    """
    o = _as_vector(o)
    o_base = np.asarray(o_base, dtype=np.float64).reshape(-1)
    if o_base.shape != o.shape:
        raise ad.ShapeError("o_base must match the score vector length")
    total = ad.constant(0.0)
    for idx in _group_indices(s):
        if len(idx) == 0:
            raise ValueError("fairod_adcg requires both sensitive groups to be nonempty")
        og = ad.take_rows(o, idx)
        n_g = len(idx)
        gains = np.exp2(o_base[idx]) - 1.0
        order = np.sort(o_base[idx])[::-1]
        idcg = float(np.sum((np.exp2(order) - 1.0) / np.log2(1.0 + np.arange(1, n_g + 1))))
        col = ad.reshape(og, (n_g, 1))
        row = ad.reshape(og, (1, n_g))
        ones_col = ad.constant(np.ones((n_g, 1)))
        ones_row = ad.constant(np.ones((1, n_g)))
        # pairwise[i, j] = o_j - o_i, including j == i
        pairwise = ad.sub(ad.matmul(ones_col, row), ad.matmul(col, ones_row))
        soft_rank = ad.row_sum(ad.sigmoid(pairwise))
        denom = ad.scale(ad.log(ad.add_scalar(soft_rank, 1.0)), idcg / _LN2)
        group_term = ad.add_scalar(
            ad.scale(ad.tsum(ad.div(ad.constant(gains), denom)), -1.0), 1.0)
        total = ad.add(total, group_term)
    return total


def correlation_regularizer(o: Tensor, s) -> Tensor:
    """|cosine similarity| between scores and the sensitive vector."""
    o = _as_vector(o)
    s_vec = np.asarray(s, dtype=np.float64)
    if s_vec.shape != o.shape:
        raise ad.ShapeError("score and sensitive vectors must have equal length")
    s_norm_sq = float(np.dot(s_vec, s_vec))
    if s_norm_sq == 0.0 or float(np.dot(o.data, o.data)) == 0.0:
        return ad.constant(0.0)
    s_const = ad.constant(s_vec)
    num = ad.tsum(ad.hadamard(o, s_const))
    denom = ad.sqrt(ad.scale(ad.tsum(ad.square(o)), s_norm_sq))
    return ad.absolute(ad.div(num, denom))


def hin_dp(probs: Tensor, s) -> Tensor:
    """Demographic-parity penalty on predicted anomaly probabilities:
    squared group-mean gaps of P(flagged) and P(not flagged)."""
    probs = _as_vector(probs)
    if np.any(probs.data < 0) or np.any(probs.data > 1):
        raise ad.DomainError("probabilities must lie in [0, 1]")
    g0, g1 = _group_indices(s)
    if len(g0) == 0 or len(g1) == 0:
        raise ValueError("hin_dp requires both sensitive groups to be nonempty")
    total = ad.constant(0.0)
    for k in (1, 0):
        p_k = probs if k == 1 else ad.add_scalar(ad.scale(probs, -1.0), 1.0)
        gap = ad.sub(ad.tmean(ad.take_rows(p_k, g1)), ad.tmean(ad.take_rows(p_k, g0)))
        total = ad.add(total, ad.square(gap))
    return total
