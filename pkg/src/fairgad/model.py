"""Forward passes for every network in the detector.

The encoder is a two-layer graph convolution with a shared first layer and
three heads: mean and log-std of the stochastic latent, plus a deterministic
one-dimensional head trained to predict the sensitive attribute.  Structure
is decoded by an inner product over the concatenated latents (raw logits;
the sigmoid is fused into the loss for stability), attributes by two more
propagation layers mirroring the encoder.  The scoring-phase decoder is a
plain two-layer MLP with no graph propagation at all, so biased topology
cannot leak into the anomaly scores through it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import AttributedGraph
from .sparse import SparseMatrix

__all__ = [
    "EncoderParams",
    "LatentSample",
    "MlpParams",
    "AttrDecoderParams",
    "ModelParams",
    "BaselineParams",
    "encode",
    "decode_attributes",
    "decode_structure",
    "predict_sensitive",
    "adversary_logit",
    "anomaly_decode",
    "baseline_forward",
    "init_encoder",
    "init_attr_decoder",
    "init_mlp",
    "init_baseline",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
]

HIDDEN_DIM = 64
LATENT_DIM = 64
SENSITIVE_DIM = 1
LOG_SIGMA_CLAMP = 10.0
PROB_EPS = 1e-12
CHECKPOINT_VERSION = 1


def glorot(rng, fan_in: int, fan_out: int, requires_grad: bool = True) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)), requires_grad=requires_grad)


def zeros_bias(width: int, requires_grad: bool = True) -> Tensor:
    return Tensor(np.zeros(width), requires_grad=requires_grad)


@dataclass
class EncoderParams:
    """Shared propagation layer plus mean/log-std/sensitive heads.

    ``w_phi`` is None for the single-head (vanilla) variant.
    """

    w_shared: Tensor
    b_shared: Tensor
    w_mu: Tensor
    b_mu: Tensor
    w_logsigma: Tensor
    b_logsigma: Tensor
    w_phi: Tensor | None
    b_phi: Tensor | None

    def parameters(self) -> list:
        ps = [self.w_shared, self.b_shared, self.w_mu, self.b_mu,
              self.w_logsigma, self.b_logsigma]
        if self.w_phi is not None:
            ps += [self.w_phi, self.b_phi]
        return ps

    def set_requires_grad(self, flag: bool) -> None:
        for p in self.parameters():
            p.requires_grad = flag

    @property
    def has_sensitive_head(self) -> bool:
        return self.w_phi is not None


@dataclass
class LatentSample:
    """Per-node representations from one encoder pass."""

    z_x: Tensor
    z_s: Tensor | None
    mu: Tensor
    log_sigma: Tensor


@dataclass
class AttrDecoderParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def parameters(self) -> list:
        return [self.w1, self.b1, self.w2, self.b2]

    def set_requires_grad(self, flag: bool) -> None:
        for p in self.parameters():
            p.requires_grad = flag


@dataclass
class MlpParams:
    """Two affine layers with a ReLU between; adversary and scoring decoder."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def parameters(self) -> list:
        return [self.w1, self.b1, self.w2, self.b2]

    def set_requires_grad(self, flag: bool) -> None:
        for p in self.parameters():
            p.requires_grad = flag


@dataclass
class ModelParams:
    encoder: EncoderParams
    attr_decoder: AttrDecoderParams
    anomaly_decoder: MlpParams | None
    adversary: MlpParams | None

    def parameters(self) -> list:
        ps = self.encoder.parameters() + self.attr_decoder.parameters()
        if self.anomaly_decoder is not None:
            ps += self.anomaly_decoder.parameters()
        if self.adversary is not None:
            ps += self.adversary.parameters()
        return ps


@dataclass
class BaselineParams:
    """Single-latent graph autoencoder with attribute and inner-product
    structure reconstruction."""

    w_enc1: Tensor
    b_enc1: Tensor
    w_enc2: Tensor
    b_enc2: Tensor
    w_dec1: Tensor
    b_dec1: Tensor
    w_dec2: Tensor
    b_dec2: Tensor

    def parameters(self) -> list:
        return [self.w_enc1, self.b_enc1, self.w_enc2, self.b_enc2,
                self.w_dec1, self.b_dec1, self.w_dec2, self.b_dec2]


def init_encoder(n_attrs: int, rng, hidden: int = HIDDEN_DIM, latent: int = LATENT_DIM,
                 vanilla: bool = False) -> EncoderParams:
    w_phi = b_phi = None
    w_shared = glorot(rng, n_attrs, hidden)
    b_shared = zeros_bias(hidden)
    w_mu = glorot(rng, hidden, latent)
    b_mu = zeros_bias(latent)
    w_ls = glorot(rng, hidden, latent)
    b_ls = zeros_bias(latent)
    if not vanilla:
        w_phi = glorot(rng, hidden, SENSITIVE_DIM)
        b_phi = zeros_bias(SENSITIVE_DIM)
    return EncoderParams(w_shared, b_shared, w_mu, b_mu, w_ls, b_ls, w_phi, b_phi)


def init_attr_decoder(n_attrs: int, rng, hidden: int = HIDDEN_DIM, latent: int = LATENT_DIM,
                      vanilla: bool = False) -> AttrDecoderParams:
    width_in = latent if vanilla else latent + SENSITIVE_DIM
    return AttrDecoderParams(
        w1=glorot(rng, width_in, hidden), b1=zeros_bias(hidden),
        w2=glorot(rng, hidden, n_attrs), b2=zeros_bias(n_attrs),
    )


def init_mlp(width_in: int, width_hidden: int, width_out: int, rng) -> MlpParams:
    return MlpParams(
        w1=glorot(rng, width_in, width_hidden), b1=zeros_bias(width_hidden),
        w2=glorot(rng, width_hidden, width_out), b2=zeros_bias(width_out),
    )


def init_baseline(n_attrs: int, rng, hidden: int = HIDDEN_DIM,
                  latent: int = LATENT_DIM) -> BaselineParams:
    return BaselineParams(
        w_enc1=glorot(rng, n_attrs, hidden), b_enc1=zeros_bias(hidden),
        w_enc2=glorot(rng, hidden, latent), b_enc2=zeros_bias(latent),
        w_dec1=glorot(rng, latent, hidden), b_dec1=zeros_bias(hidden),
        w_dec2=glorot(rng, hidden, n_attrs), b_dec2=zeros_bias(n_attrs),
    )


def _conv(norm_adj: SparseMatrix, h: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return ad.add(ad.matmul(ad.spmm(norm_adj, h), w), b)


def encode(g: AttributedGraph, norm_adj: SparseMatrix, p: EncoderParams,
           noise: Tensor | None = None, deterministic: bool = False) -> LatentSample:
    """Two propagation layers; stochastic latent via the reparameterization
    trick unless ``deterministic`` (then the latent is the mean)."""
    h = ad.relu(_conv(norm_adj, g.attributes, p.w_shared, p.b_shared))
    mu = _conv(norm_adj, h, p.w_mu, p.b_mu)
    log_sigma = ad.clip(_conv(norm_adj, h, p.w_logsigma, p.b_logsigma),
                        -LOG_SIGMA_CLAMP, LOG_SIGMA_CLAMP)
    z_s = None
    if p.has_sensitive_head:
        z_s = _conv(norm_adj, h, p.w_phi, p.b_phi)
    if deterministic:
        z_x = mu
    else:
        if noise is None:
            raise ValueError("stochastic encode requires a noise tensor")
        if noise.shape != mu.shape:
            raise ad.ShapeError(f"noise shape {noise.shape} does not match latent {mu.shape}")
        z_x = ad.add(mu, ad.hadamard(ad.exp(log_sigma), noise))
    return LatentSample(z_x=z_x, z_s=z_s, mu=mu, log_sigma=log_sigma)


def _concat_latents(z_x: Tensor, z_s: Tensor | None) -> Tensor:
    return z_x if z_s is None else ad.concat_cols(z_x, z_s)


def decode_attributes(z_x: Tensor, z_s: Tensor | None, norm_adj: SparseMatrix,
                      dec: AttrDecoderParams) -> Tensor:
    z = _concat_latents(z_x, z_s)
    h = ad.relu(_conv(norm_adj, z, dec.w1, dec.b1))
    return _conv(norm_adj, h, dec.w2, dec.b2)


def decode_structure(z_x: Tensor, z_s: Tensor | None) -> Tensor:
    """Raw inner-product logits over concatenated latents; symmetric."""
    return ad.gram(_concat_latents(z_x, z_s))


def predict_sensitive(z_s: Tensor) -> Tensor:
    """Bernoulli parameter for the sensitive attribute, kept inside (0, 1)."""
    if z_s.ndim != 2 or z_s.shape[1] != SENSITIVE_DIM:
        raise ad.ShapeError(f"sensitive latent must be N x {SENSITIVE_DIM}, got {z_s.shape}")
    return ad.clip(ad.sigmoid(z_s), PROB_EPS, 1.0 - PROB_EPS)


def _mlp(x: Tensor, p: MlpParams):
    hidden = ad.relu(ad.add(ad.matmul(x, p.w1), p.b1))
    return ad.add(ad.matmul(hidden, p.w2), p.b2), hidden


def adversary_logit(z_x_rows: Tensor, z_s_rows: Tensor, adversary: MlpParams) -> Tensor:
    """One discrimination logit per (z_x, z_s) pair; under the sigmoid
    parameterization the logit equals log p(true) - log p(fake)."""
    if z_x_rows.shape[0] != z_s_rows.shape[0]:
        raise ad.ShapeError("paired rows must have equal counts")
    out, _ = _mlp(ad.concat_cols(z_x_rows, z_s_rows), adversary)
    return out


def anomaly_decode(z_x_bar: Tensor, z_s_shuffled: Tensor | None, decoder: MlpParams,
                   return_hidden: bool = False):
    """Row-local attribute reconstruction; no graph propagation anywhere."""
    out, hidden = _mlp(_concat_latents(z_x_bar, z_s_shuffled), decoder)
    if return_hidden:
        return out, hidden
    return out


def baseline_forward(g: AttributedGraph, norm_adj: SparseMatrix, p: BaselineParams):
    """Single-latent autoencoder: attribute and structure reconstruction."""
    h = ad.relu(_conv(norm_adj, g.attributes, p.w_enc1, p.b_enc1))
    z = _conv(norm_adj, h, p.w_enc2, p.b_enc2)
    h2 = ad.relu(_conv(norm_adj, z, p.w_dec1, p.b_dec1))
    x_hat = _conv(norm_adj, h2, p.w_dec2, p.b_dec2)
    a_logits = ad.gram(z)
    return x_hat, a_logits


# ---------------------------------------------------------------------------
# checkpoints


class CheckpointError(ValueError):
    pass


_PARAM_CONTAINERS = {
    "encoder": EncoderParams,
    "attr_decoder": AttrDecoderParams,
    "anomaly_decoder": MlpParams,
    "adversary": MlpParams,
}


def _flatten_params(params) -> dict:
    flat = {}
    if isinstance(params, BaselineParams):
        for name in params.__dataclass_fields__:
            flat[f"baseline.{name}"] = getattr(params, name)
        return flat
    for part_name in ("encoder", "attr_decoder", "anomaly_decoder", "adversary"):
        part = getattr(params, part_name)
        if part is None:
            continue
        for name in part.__dataclass_fields__:
            value = getattr(part, name)
            if isinstance(value, Tensor):
                flat[f"{part_name}.{name}"] = value
    return flat


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def save_checkpoint(path, params, config: dict) -> None:
    """Binary record of every parameter tensor plus a config fingerprint."""
    flat = _flatten_params(params)
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "kind": "baseline" if isinstance(params, BaselineParams) else "model",
        "config_hash": config_hash(config),
        "config": config,
        "arrays": sorted(flat),
    }
    arrays = {key.replace(".", "__"): t.data for key, t in flat.items()}
    np.savez(path, _meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8),
             **arrays)


def load_checkpoint(path, into) -> dict:
    """Restore parameters in place, rejecting any shape mismatch."""
    with np.load(path) as payload:
        meta = json.loads(bytes(payload["_meta"]).decode("utf-8"))
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {meta.get('format_version')}")
        flat = _flatten_params(into)
        if sorted(flat) != meta["arrays"]:
            raise CheckpointError("checkpoint parameter layout does not match the model")
        for key, tensor in flat.items():
            stored = payload[key.replace(".", "__")]
            if stored.shape != tensor.data.shape:
                raise CheckpointError(
                    f"shape mismatch for {key}: checkpoint {stored.shape}, model {tensor.data.shape}")
            tensor.data = stored.astype(np.float64)
    return meta
