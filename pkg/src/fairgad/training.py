"""Two-phase training: adversarial disentangled representation learning,
then anomaly-decoder training against a frozen encoder.

Phase 1 alternates, within each epoch, a model update (encoder, attribute
decoder) on the combined objective with an adversary update on its own
discrimination loss; the adversary sees the epoch's latents as constants
and the model step uses the adversary parameters from before that epoch's
adversary step.  Early stopping watches the combined loss and restores the
best epoch's parameters.  Phase 2 freezes the encoder, trains only the MLP
scoring decoder for a fixed number of epochs, and produces the final
anomaly scores with a fixed, seed-derived shuffle so results reproduce
bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import losses as L
from . import model as M
from .autodiff import Tape, Tensor
from .graph import AttributedGraph, check_graph
from .losses import LossReport, LossWeights
from .optim import Adam
from .sparse import symmetric_normalize

__all__ = [
    "VARIANTS",
    "REGULARIZERS",
    "TrainConfig",
    "TrainedModel",
    "NumericalError",
    "EarlyStopper",
    "train_phase1",
    "train_phase2",
    "train",
    "train_baseline_with_regularizer",
    "score_graph",
]

VARIANTS = ("FULL", "NO_CORR", "VANILLA_VGAE", "NO_ADVERSARY", "WITH_STRUCT")
REGULARIZERS = ("none", "fairod", "correlation", "hin")

_ADVERSARIAL = {"FULL", "NO_CORR", "WITH_STRUCT"}


class NumericalError(RuntimeError):
    """A loss term left the finite range during training."""


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    phase1_max_epochs: int = 100
    patience: int = 20
    phase2_epochs: int = 100
    weights: LossWeights = field(default_factory=LossWeights)
    variant: str = "FULL"
    seed: int = 0
    shuffle_policy: str = "per_epoch"
    reduction: str = "mean"
    hidden_dim: int = M.HIDDEN_DIM
    latent_dim: int = M.LATENT_DIM
    attribute_only: bool = False
    corr_on: str = "probability"
    baseline_lambda: float = 1.0
    baseline_adcg_weight: float = 0.0

    def validate(self) -> "TrainConfig":
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.phase1_max_epochs < 1 or self.phase2_epochs < 1:
            raise ValueError("epoch counts must be positive")
        if not (0 < self.patience < self.phase1_max_epochs):
            raise ValueError("patience must lie in (0, phase1_max_epochs)")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.shuffle_policy not in ("per_epoch", "fixed"):
            raise ValueError("shuffle_policy must be 'per_epoch' or 'fixed'")
        if self.reduction not in ("mean", "sum"):
            raise ValueError("reduction must be 'mean' or 'sum'")
        if self.corr_on not in ("probability", "latent"):
            raise ValueError("corr_on must be 'probability' or 'latent'")
        if self.attribute_only and self.variant == "WITH_STRUCT":
            raise ValueError("attribute_only cannot be combined with WITH_STRUCT")
        self.weights.validate()
        return self


@dataclass
class Phase1Result:
    encoder: M.EncoderParams
    attr_decoder: M.AttrDecoderParams
    adversary: M.MlpParams | None
    history: list
    best_epoch: int
    best_noise: np.ndarray
    epsilon_mix: float
    norm_adj: object


@dataclass
class Phase2Result:
    anomaly_decoder: M.MlpParams
    scores: np.ndarray
    history: list


@dataclass
class TrainedModel:
    params: M.ModelParams
    phase1_history: list
    phase2_history: list
    epochs_run: tuple
    scores: np.ndarray
    epsilon_mix: float
    best_epoch: int
    variant: str
    seed: int


class EarlyStopper:
    """Stop when the watched loss has not strictly improved for `patience`
    consecutive epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = -1
        self.stall = 0

    def update(self, value: float, epoch: int) -> bool:
        """Record one epoch; returns True when training should stop and
        whether this epoch set a new best is visible via ``improved``."""
        if value < self.best:
            self.best = value
            self.best_epoch = epoch
            self.stall = 0
            self.improved = True
            return False
        self.improved = False
        self.stall += 1
        return self.stall >= self.patience


def _phase_seeds(seed: int):
    return np.random.SeedSequence(seed).spawn(3)


def _check_finite(report: LossReport) -> None:
    for name, value in report.terms().items():
        if not np.isfinite(value):
            raise NumericalError(f"non-finite loss term: {name}")


def _snapshot(parts) -> list:
    return [p.data.copy() for part in parts if part is not None for p in part.parameters()]


def _restore(parts, saved) -> None:
    tensors = [p for part in parts if part is not None for p in part.parameters()]
    for t, arr in zip(tensors, saved):
        t.data = arr.copy()


def phase1_losses(g: AttributedGraph, norm_adj, encoder, attr_decoder, adversary,
                  noise: Tensor | None, cfg: TrainConfig, a_dense, epsilon_mix: float):
    """One phase-1 forward pass; returns (total tensor, report)."""
    w = cfg.weights
    lat = M.encode(g, norm_adj, encoder, noise=noise, deterministic=noise is None)
    x_hat = M.decode_attributes(lat.z_x, lat.z_s, norm_adj, attr_decoder)
    rec_x = L.attribute_mse(g.attributes, x_hat, cfg.reduction)
    if cfg.attribute_only:
        rec = rec_x
        rec_a_val = 0.0
    else:
        a_logits = M.decode_structure(lat.z_x, lat.z_s)
        rec_a = L.structure_bce(a_dense, a_logits, cfg.reduction)
        rec = ad.add(ad.scale(rec_x, 1.0 - epsilon_mix), ad.scale(rec_a, epsilon_mix))
        rec_a_val = float(rec_a.data)
    kl = L.kl_gaussian(lat.mu, lat.log_sigma, cfg.reduction)

    if cfg.variant in _ADVERSARIAL:
        # the encoder step must not move the adversary
        adversary.set_requires_grad(False)
        dis = L.disentangle_loss(M.adversary_logit(lat.z_x, lat.z_s, adversary))
        adversary.set_requires_grad(True)
    else:
        dis = ad.constant(0.0)
    if encoder.has_sensitive_head:
        pre = L.predictiveness_from_logits(g.sensitive, lat.z_s, cfg.reduction)
    else:
        pre = ad.constant(0.0)

    total = L.total_loss(rec, kl, dis, pre, w)
    report = LossReport(
        rec_x=float(rec_x.data), rec_a=rec_a_val, kl=float(kl.data),
        dis=float(dis.data), pre=float(pre.data), total=float(total.data),
    )
    return total, report, lat


def train_phase1(g: AttributedGraph, cfg: TrainConfig) -> Phase1Result:
    """Disentangled representation learning with early stopping; parameters
    are restored to the best-loss epoch."""
    cfg.validate()
    check_graph(g)
    ss_phase1, _, _ = _phase_seeds(cfg.seed)
    ss_init, ss_noise, ss_perm = ss_phase1.spawn(3)
    rng_init = np.random.default_rng(ss_init)
    rng_noise = np.random.default_rng(ss_noise)
    rng_perm = np.random.default_rng(ss_perm)

    vanilla = cfg.variant == "VANILLA_VGAE"
    n, d = g.n_nodes, g.n_attrs
    encoder = M.init_encoder(d, rng_init, cfg.hidden_dim, cfg.latent_dim, vanilla=vanilla)
    attr_decoder = M.init_attr_decoder(d, rng_init, cfg.hidden_dim, cfg.latent_dim,
                                       vanilla=vanilla)
    adversary = None
    if cfg.variant in _ADVERSARIAL:
        adversary = M.init_mlp(cfg.latent_dim + M.SENSITIVE_DIM, cfg.hidden_dim, 1, rng_init)

    norm_adj = symmetric_normalize(g.adjacency)
    a_dense = None if cfg.attribute_only else g.adjacency.to_dense()
    epsilon_mix = 0.0 if cfg.attribute_only else L.compute_epsilon_mix(g)
    cfg.weights.epsilon_mix = epsilon_mix

    model_opt = Adam(encoder.parameters() + attr_decoder.parameters(), cfg.learning_rate)
    adv_opt = Adam(adversary.parameters(), cfg.learning_rate) if adversary else None

    stopper = EarlyStopper(cfg.patience)
    history: list[LossReport] = []
    best_params = _snapshot([encoder, attr_decoder, adversary])
    best_noise = None

    for epoch in range(cfg.phase1_max_epochs):
        noise = Tensor(rng_noise.standard_normal((n, cfg.latent_dim)))
        with Tape() as tape:
            total, report, lat = phase1_losses(
                g, norm_adj, encoder, attr_decoder, adversary, noise, cfg,
                a_dense, epsilon_mix)
        _check_finite(report)
        ad.backward(tape, total)
        model_opt.step()
        model_opt.zero_grad()

        if adversary is not None:
            perm = rng_perm.permutation(n)
            z_x_const = lat.z_x.detach()
            z_s_const = lat.z_s.detach()
            with Tape() as adv_tape:
                logits_true = M.adversary_logit(z_x_const, z_s_const, adversary)
                logits_fake = M.adversary_logit(
                    z_x_const, ad.permute_rows(z_s_const, perm), adversary)
                adv_total = L.adversary_loss(logits_true, logits_fake)
            report.adv = float(adv_total.data)
            if not np.isfinite(report.adv):
                raise NumericalError("non-finite loss term: adv")
            ad.backward(adv_tape, adv_total)
            adv_opt.step()
            adv_opt.zero_grad()

        history.append(report)
        stop = stopper.update(report.total, epoch)
        if stopper.improved:
            best_params = _snapshot([encoder, attr_decoder, adversary])
            best_noise = noise.data.copy()
        if stop:
            break

    _restore([encoder, attr_decoder, adversary], best_params)
    return Phase1Result(
        encoder=encoder, attr_decoder=attr_decoder, adversary=adversary,
        history=history, best_epoch=stopper.best_epoch, best_noise=best_noise,
        epsilon_mix=epsilon_mix, norm_adj=norm_adj,
    )


def train_phase2(g: AttributedGraph, frozen_encoder: M.EncoderParams,
                 cfg: TrainConfig, norm_adj=None) -> Phase2Result:
    """Train the MLP scoring decoder against the frozen encoder.

    The encoder's deterministic latents are computed once; every epoch the
    sensitive latent rows are shuffled (per ``shuffle_policy``), attributes
    are reconstructed, and only the decoder is updated.  Final scores use a
    fixed permutation derived from the run seed.
    """
    cfg.validate()
    _, ss_phase2, _ = _phase_seeds(cfg.seed)
    ss_init, ss_shuffle, ss_final = ss_phase2.spawn(3)
    rng_init = np.random.default_rng(ss_init)
    rng_shuffle = np.random.default_rng(ss_shuffle)
    fixed_perm = np.random.default_rng(ss_final).permutation(g.n_nodes)

    frozen_encoder.set_requires_grad(False)
    if norm_adj is None:
        norm_adj = symmetric_normalize(g.adjacency)
    lat = M.encode(g, norm_adj, frozen_encoder, deterministic=True)
    z_x_bar = lat.z_x.detach()
    z_s = lat.z_s.detach() if lat.z_s is not None else None

    use_corr = cfg.variant not in ("NO_CORR", "VANILLA_VGAE") and z_s is not None
    s_pred = None
    if use_corr:
        s_pred = M.predict_sensitive(z_s) if cfg.corr_on == "probability" else z_s
        s_pred = s_pred.detach()

    width_in = cfg.latent_dim + (M.SENSITIVE_DIM if z_s is not None else 0)
    decoder = M.init_mlp(width_in, cfg.hidden_dim, g.n_attrs, rng_init)
    opt = Adam(decoder.parameters(), cfg.learning_rate)
    a_dense = g.adjacency.to_dense() if cfg.variant == "WITH_STRUCT" else None

    x_const = g.attributes.detach()
    encoder_params = frozen_encoder.parameters()
    history: list[LossReport] = []

    for _epoch in range(cfg.phase2_epochs):
        if z_s is not None:
            perm = fixed_perm if cfg.shuffle_policy == "fixed" else rng_shuffle.permutation(g.n_nodes)
        with Tape() as tape:
            z_s_shuffled = ad.permute_rows(z_s, perm) if z_s is not None else None
            x_tilde, hidden = M.anomaly_decode(z_x_bar, z_s_shuffled, decoder,
                                               return_hidden=True)
            o = L.anomaly_scores(x_const, x_tilde)
            corr = L.correlation_constraint(o, s_pred) if use_corr else ad.constant(0.0)
            total = L.ad_loss(o, corr, cfg.weights.beta if use_corr else 0.0, cfg.reduction)
            rec_a_val = 0.0
            if cfg.variant == "WITH_STRUCT":
                struct = L.structure_bce(a_dense, ad.gram(hidden), cfg.reduction)
                total = ad.add(total, struct)
                rec_a_val = float(struct.data)
        report = LossReport(
            rec_x=float(_reduced_value(o, cfg.reduction)), rec_a=rec_a_val,
            corr=float(corr.data), total=float(total.data))
        _check_finite(report)
        ad.backward(tape, total)
        for p in encoder_params:
            if p.grad is not None and np.any(p.grad):
                raise AssertionError("frozen encoder received a nonzero gradient")
        opt.step()
        opt.zero_grad()
        history.append(report)

    # final, reproducible scoring pass
    z_s_final = ad.permute_rows(z_s, fixed_perm) if z_s is not None else None
    x_tilde = M.anomaly_decode(z_x_bar, z_s_final, decoder)
    scores = L.anomaly_scores(x_const, x_tilde).data.copy()
    return Phase2Result(anomaly_decoder=decoder, scores=scores, history=history)


def _reduced_value(o: Tensor, reduction: str) -> float:
    return float(o.data.mean() if reduction == "mean" else o.data.sum())


def train(g: AttributedGraph, cfg: TrainConfig) -> TrainedModel:
    """Run both phases; fully deterministic given the graph and cfg.seed."""
    cfg.validate()
    p1 = train_phase1(g, cfg)
    p2 = train_phase2(g, p1.encoder, cfg, norm_adj=p1.norm_adj)
    params = M.ModelParams(
        encoder=p1.encoder, attr_decoder=p1.attr_decoder,
        anomaly_decoder=p2.anomaly_decoder, adversary=p1.adversary)
    return TrainedModel(
        params=params, phase1_history=p1.history, phase2_history=p2.history,
        epochs_run=(len(p1.history), len(p2.history)), scores=p2.scores,
        epsilon_mix=p1.epsilon_mix, best_epoch=p1.best_epoch,
        variant=cfg.variant, seed=cfg.seed,
    )


def score_graph(g: AttributedGraph, params: M.ModelParams, cfg: TrainConfig) -> np.ndarray:
    """Score a graph with already-trained parameters (deterministic)."""
    norm_adj = symmetric_normalize(g.adjacency)
    lat = M.encode(g, norm_adj, params.encoder, deterministic=True)
    z_s = lat.z_s
    if z_s is not None:
        _, _, ss = np.random.SeedSequence(cfg.seed).spawn(3)[1].spawn(3)
        fixed_perm = np.random.default_rng(ss).permutation(g.n_nodes)
        z_s = ad.permute_rows(z_s.detach(), fixed_perm)
    x_tilde = M.anomaly_decode(lat.z_x.detach(), z_s, params.anomaly_decoder)
    return L.anomaly_scores(g.attributes.detach(), x_tilde).data.copy()


# ---------------------------------------------------------------------------
# reconstruction baseline with optional fairness regularizers


class BaselineError(ValueError):
    pass


@dataclass
class BaselineModel:
    params: M.BaselineParams
    history: list
    scores: np.ndarray
    epochs_run: int
    regularizer: str
    seed: int


def _baseline_row_scores(g, norm_adj, params, a_dense, epsilon_mix):
    x_hat, a_logits = M.baseline_forward(g, norm_adj, params)
    row_mse = ad.scale(ad.frobenius_sq_rows(ad.sub(x_hat, g.attributes)), 1.0 / g.n_attrs)
    row_bce = ad.scale(ad.row_sum(ad.bce_with_logits(a_logits, a_dense)), 1.0 / g.n_nodes)
    return ad.add(ad.scale(row_mse, 1.0 - epsilon_mix), ad.scale(row_bce, epsilon_mix))


def train_baseline_with_regularizer(g: AttributedGraph, reg: str, cfg: TrainConfig,
                                    o_base: np.ndarray | None = None) -> BaselineModel:
    """Joint attribute/structure reconstruction detector, optionally with a
    fairness regularizer added to its loss.

    ``o_base`` (scores of a prior ``none`` run with the same config) is
    required by the group-fidelity term of ``fairod`` and, when its weight
    is nonzero, of ``hin``.
    """
    cfg.validate()
    check_graph(g)
    if reg not in REGULARIZERS:
        raise BaselineError(f"unknown regularizer {reg!r}; valid: {', '.join(REGULARIZERS)}")
    lam = cfg.baseline_lambda
    adcg_weight = cfg.baseline_adcg_weight
    if reg == "fairod" and o_base is None:
        raise BaselineError("fairod requires base scores from a prior 'none' run")
    if reg == "hin" and adcg_weight > 0 and o_base is None:
        raise BaselineError("hin with a nonzero group-fidelity weight requires base scores")

    _, _, ss_base = _phase_seeds(cfg.seed)
    rng_init = np.random.default_rng(ss_base)
    params = M.init_baseline(g.n_attrs, rng_init, cfg.hidden_dim, cfg.latent_dim)
    norm_adj = symmetric_normalize(g.adjacency)
    a_dense = g.adjacency.to_dense()
    epsilon_mix = L.compute_epsilon_mix(g)
    cfg.weights.epsilon_mix = epsilon_mix

    opt = Adam(params.parameters(), cfg.learning_rate)
    stopper = EarlyStopper(cfg.patience)
    history: list[LossReport] = []
    best = [p.data.copy() for p in params.parameters()]

    for epoch in range(cfg.phase1_max_epochs):
        with Tape() as tape:
            o = _baseline_row_scores(g, norm_adj, params, a_dense, epsilon_mix)
            total = L._reduce(o, cfg.reduction)
            corr_val = 0.0
            if reg != "none" and lam > 0:
                if reg == "fairod":
                    term = L.fairod_dp(o, g.sensitive)
                elif reg == "correlation":
                    term = L.correlation_regularizer(o, g.sensitive)
                else:
                    probs = ad.sigmoid(ad.sub(o, ad.tmean(o)))
                    term = L.hin_dp(probs, g.sensitive)
                corr_val = float(term.data)
                total = ad.add(total, ad.scale(term, lam))
            if reg in ("fairod", "hin") and adcg_weight > 0:
                total = ad.add(total, ad.scale(L.fairod_adcg(o, o_base, g.sensitive),
                                               adcg_weight))
        report = LossReport(rec_x=float(_reduced_value(o, cfg.reduction)),
                            corr=corr_val, total=float(total.data))
        _check_finite(report)
        ad.backward(tape, total)
        opt.step()
        opt.zero_grad()
        history.append(report)
        stop = stopper.update(report.total, epoch)
        if stopper.improved:
            best = [p.data.copy() for p in params.parameters()]
        if stop:
            break

    for p, arr in zip(params.parameters(), best):
        p.data = arr.copy()
    scores = _baseline_row_scores(g, norm_adj, params, a_dense, epsilon_mix).data.copy()
    return BaselineModel(params=params, history=history, scores=scores,
                         epochs_run=len(history), regularizer=reg, seed=cfg.seed)
