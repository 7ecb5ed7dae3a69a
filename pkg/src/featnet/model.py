"""Encoder, overlap merge, sampling, and decoders.

The encoder runs two graph-convolutional layers with a shared first layer
and separate second-layer weights for the mean and log-sigma heads:

    head(X, A) = A_hat @ relu(A_hat @ X @ W0) @ W1_head

Raw head width is F_A + 2*F_AX + F_X. The two F_AX blocks are averaged
into one shared block, giving F = F_A + F_AX + F_X embedding columns:
the first F_A + F_AX feed the adjacency decoder, the last F_AX + F_X feed
the feature decoder, and the F_AX in the middle are used by both. Keeping
the raw width fixed while moving dimensions between the exclusive and
shared blocks leaves the trainable-parameter count unchanged.

No layer carries a bias vector.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .graph import NormalizedAdjacency, spmm

ADJACENCY_DECODERS = ("deep", "shallow")
FEATURE_HEADS = ("multinomial", "bernoulli", "gaussian")


@dataclass(frozen=True)
class DimensionSplit:
    """Embedding dimension allocation (exclusive-adjacency, shared, exclusive-feature)."""

    f_a: int
    f_ax: int
    f_x: int

    def __post_init__(self):
        if min(self.f_a, self.f_ax, self.f_x) < 0:
            raise ValueError("dimension counts must be >= 0")
        if self.total == 0:
            raise ValueError("need at least one embedding dimension")
        if self.adjacency_dims == 0 or self.feature_dims == 0:
            raise ValueError("both decoders need at least one input dimension")

    @property
    def total(self) -> int:
        """F, the merged embedding width."""
        return self.f_a + self.f_ax + self.f_x

    @property
    def raw_width(self) -> int:
        """Encoder head width before the overlap blocks are merged."""
        return self.f_a + 2 * self.f_ax + self.f_x

    @property
    def adjacency_dims(self) -> int:
        return self.f_a + self.f_ax

    @property
    def feature_dims(self) -> int:
        return self.f_ax + self.f_x

    @property
    def adjacency_slice(self) -> slice:
        return slice(0, self.f_a + self.f_ax)

    @property
    def feature_slice(self) -> slice:
        return slice(self.f_a, self.total)


@dataclass(frozen=True)
class ModelConfig:
    split: DimensionSplit
    feature_dim: int
    h_enc: int = 50
    h_dec: int = 50
    adjacency_decoder: str = "deep"
    feature_head: str = "multinomial"

    def __post_init__(self):
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        if self.h_enc < 1 or self.h_dec < 1:
            raise ValueError("hidden widths must be >= 1")
        if self.adjacency_decoder not in ADJACENCY_DECODERS:
            raise ValueError(f"unknown adjacency decoder {self.adjacency_decoder!r}")
        if self.feature_head not in FEATURE_HEADS:
            raise ValueError(f"unknown feature head {self.feature_head!r}")


@dataclass
class EncoderWeights:
    """Shared first layer plus the two second-layer heads."""

    w0: np.ndarray        # (D, H_enc)
    w1_mu: np.ndarray     # (H_enc, raw_width)
    w1_sigma: np.ndarray  # (H_enc, raw_width)


@dataclass
class DecoderWeights:
    """Adjacency decoder (absent for the shallow variant) and feature decoder."""

    w_adj0: np.ndarray | None  # (F_A + F_AX, H_dec)
    w_adj1: np.ndarray | None  # (H_dec, H_dec) bilinear form
    w_feat0: np.ndarray        # (F_AX + F_X, H_dec)
    w_feat1: np.ndarray        # (H_dec, D)


@dataclass
class ModelWeights:
    """All trainable state for one model instance."""

    config: ModelConfig
    encoder: EncoderWeights
    decoder: DecoderWeights

    _ENCODER_NAMES = ("w_enc0", "w_enc1_mu", "w_enc1_sigma")
    _DECODER_NAMES = ("w_dec_a0", "w_dec_a1", "w_dec_x0", "w_dec_x1")

    def arrays(self) -> dict[str, np.ndarray]:
        """Name -> array for every trainable matrix, in a fixed order."""
        out = {
            "w_enc0": self.encoder.w0,
            "w_enc1_mu": self.encoder.w1_mu,
            "w_enc1_sigma": self.encoder.w1_sigma,
        }
        if self.decoder.w_adj0 is not None:
            out["w_dec_a0"] = self.decoder.w_adj0
            out["w_dec_a1"] = self.decoder.w_adj1
        out["w_dec_x0"] = self.decoder.w_feat0
        out["w_dec_x1"] = self.decoder.w_feat1
        return out

    def decoder_arrays(self) -> dict[str, np.ndarray]:
        """The decoder parameter vector theta, as named matrices."""
        return {k: v for k, v in self.arrays().items() if k.startswith("w_dec_")}

    def set_array(self, name: str, value: np.ndarray) -> None:
        mapping = {
            "w_enc0": ("encoder", "w0"),
            "w_enc1_mu": ("encoder", "w1_mu"),
            "w_enc1_sigma": ("encoder", "w1_sigma"),
            "w_dec_a0": ("decoder", "w_adj0"),
            "w_dec_a1": ("decoder", "w_adj1"),
            "w_dec_x0": ("decoder", "w_feat0"),
            "w_dec_x1": ("decoder", "w_feat1"),
        }
        part, attr = mapping[name]
        setattr(getattr(self, part), attr, value)

    def copy(self) -> "ModelWeights":
        enc = EncoderWeights(self.encoder.w0.copy(), self.encoder.w1_mu.copy(), self.encoder.w1_sigma.copy())
        dec = DecoderWeights(
            None if self.decoder.w_adj0 is None else self.decoder.w_adj0.copy(),
            None if self.decoder.w_adj1 is None else self.decoder.w_adj1.copy(),
            self.decoder.w_feat0.copy(),
            self.decoder.w_feat1.copy(),
        )
        return ModelWeights(self.config, enc, dec)

    @property
    def n_parameters(self) -> int:
        return sum(a.size for a in self.arrays().values())


def count_parameters(config: ModelConfig) -> int:
    """Closed-form trainable-parameter count for a configuration.

    Depends on the split only through the per-task widths F_A + F_AX and
    F_AX + F_X and the raw head width, all of which stay fixed when
    dimensions are traded between exclusive and shared blocks.
    """
    s = config.split
    enc = config.feature_dim * config.h_enc + 2 * config.h_enc * s.raw_width
    dec = config.h_dec * s.feature_dims + config.h_dec * config.feature_dim
    if config.adjacency_decoder == "deep":
        dec += s.adjacency_dims * config.h_dec + config.h_dec * config.h_dec
    return enc + dec


@dataclass
class EmbeddingDistribution:
    """Per-node diagonal Gaussian over the merged embedding space."""

    mu: np.ndarray         # (N, F)
    log_sigma: np.ndarray  # (N, F)

    def __post_init__(self):
        if self.mu.shape != self.log_sigma.shape:
            raise ValueError("mu and log_sigma must have equal shapes")


@dataclass
class EmbeddingSample:
    """K reparameterized draws xi = mu + exp(log_sigma) * eps."""

    xi: np.ndarray   # (K, N, F)
    eps: np.ndarray  # (K, N, F)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax_rows(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def encode(
    x: np.ndarray, a_hat: NormalizedAdjacency, w: EncoderWeights
) -> tuple[np.ndarray, np.ndarray]:
    """Run both encoder heads, sharing the first-layer activation.

    Returns the raw (pre-merge) mu and log-sigma matrices, each
    N x (F_A + 2*F_AX + F_X).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != a_hat.n:
        raise ValueError(f"features have {x.shape[0]} rows for a {a_hat.n}-node graph")
    if x.shape[1] != w.w0.shape[0]:
        raise ValueError(f"features are {x.shape[1]}-dimensional, w0 expects {w.w0.shape[0]}")
    hidden = relu(spmm(a_hat, x @ w.w0))
    prop = spmm(a_hat, hidden)
    return prop @ w.w1_mu, prop @ w.w1_sigma


def merge_overlap(
    mu_raw: np.ndarray, log_sigma_raw: np.ndarray, split: DimensionSplit
) -> EmbeddingDistribution:
    """Average the two shared blocks of each raw head into one.

    Columns [0, F_A) and [F_A + 2*F_AX, raw) are copied; the F_AX overlap
    columns are the elementwise mean of the two raw F_AX blocks.
    """
    if mu_raw.shape[1] != split.raw_width or log_sigma_raw.shape[1] != split.raw_width:
        raise ValueError(
            f"raw head width {mu_raw.shape[1]} does not match split raw width {split.raw_width}"
        )
    return EmbeddingDistribution(
        mu=_merge_columns(mu_raw, split),
        log_sigma=_merge_columns(log_sigma_raw, split),
    )


def _merge_columns(raw: np.ndarray, split: DimensionSplit) -> np.ndarray:
    f_a, f_ax = split.f_a, split.f_ax
    if f_ax == 0:
        return raw.copy()
    left = raw[:, :f_a]
    shared = 0.5 * (raw[:, f_a : f_a + f_ax] + raw[:, f_a + f_ax : f_a + 2 * f_ax])
    right = raw[:, f_a + 2 * f_ax :]
    return np.concatenate([left, shared, right], axis=1)


def sample_embeddings(
    dist: EmbeddingDistribution,
    k: int,
    rng: np.random.Generator | None = None,
    eps: np.ndarray | None = None,
) -> EmbeddingSample:
    """Draw K reparameterized samples; eps may be injected for testing."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if eps is None:
        if rng is None:
            raise ValueError("need an rng when eps is not supplied")
        eps = rng.standard_normal((k, *dist.mu.shape))
    else:
        eps = np.asarray(eps, dtype=np.float64)
        if eps.shape != (k, *dist.mu.shape):
            raise ValueError(f"eps must have shape {(k, *dist.mu.shape)}, got {eps.shape}")
    sigma = np.exp(dist.log_sigma)
    xi = dist.mu[None, :, :] + sigma[None, :, :] * eps
    return EmbeddingSample(xi=xi, eps=eps)


def decode_adjacency_deep(xi_adj: np.ndarray, w: DecoderWeights) -> np.ndarray:
    """Bilinear edge probabilities sigmoid(gamma W gamma^T), gamma = relu(xi W0)."""
    if w.w_adj0 is None or w.w_adj1 is None:
        raise ValueError("deep adjacency decoding needs w_adj0/w_adj1")
    if xi_adj.shape[1] != w.w_adj0.shape[0]:
        raise ValueError(
            f"adjacency decoder expects width {w.w_adj0.shape[0]}, got {xi_adj.shape[1]}"
        )
    gamma = relu(xi_adj @ w.w_adj0)
    return sigmoid(gamma @ w.w_adj1 @ gamma.T)


def decode_adjacency_shallow(xi_adj: np.ndarray) -> np.ndarray:
    """Edge probabilities from the plain embedding inner product.

    The inner product is squashed through a sigmoid so that every entry is
    a valid Bernoulli parameter.
    """
    return sigmoid(xi_adj @ xi_adj.T)


def decode_features(xi_feat: np.ndarray, w: DecoderWeights, head: str) -> np.ndarray:
    """Per-node feature distribution parameters for the selected head.

    multinomial -> row-stochastic softmax probabilities; bernoulli ->
    elementwise sigmoid; gaussian -> raw means (unit variance).
    """
    if xi_feat.shape[1] != w.w_feat0.shape[0]:
        raise ValueError(
            f"feature decoder expects width {w.w_feat0.shape[0]}, got {xi_feat.shape[1]}"
        )
    logits = relu(xi_feat @ w.w_feat0) @ w.w_feat1
    if head == "multinomial":
        return softmax_rows(logits)
    if head == "bernoulli":
        return sigmoid(logits)
    if head == "gaussian":
        return logits
    raise ValueError(f"unknown feature head {head!r}")


# ---------------------------------------------------------------------------
# Checkpoints: one .npz holding every matrix plus a JSON metadata entry.


def save_checkpoint(path: str | Path, weights: ModelWeights, extra_meta: dict | None = None) -> None:
    cfg = weights.config
    meta = {
        "format": "featnet-checkpoint/1",
        "split": {"f_a": cfg.split.f_a, "f_ax": cfg.split.f_ax, "f_x": cfg.split.f_x},
        "feature_dim": cfg.feature_dim,
        "h_enc": cfg.h_enc,
        "h_dec": cfg.h_dec,
        "adjacency_decoder": cfg.adjacency_decoder,
        "feature_head": cfg.feature_head,
    }
    if extra_meta:
        meta["extra"] = extra_meta
    np.savez(path, meta_json=np.array(json.dumps(meta, sort_keys=True)), **weights.arrays())


def load_checkpoint(path: str | Path) -> tuple[ModelWeights, dict]:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta_json"]))
        arrays = {k: np.asarray(data[k], dtype=np.float64) for k in data.files if k != "meta_json"}
    split = DimensionSplit(**meta["split"])
    config = ModelConfig(
        split=split,
        feature_dim=meta["feature_dim"],
        h_enc=meta["h_enc"],
        h_dec=meta["h_dec"],
        adjacency_decoder=meta["adjacency_decoder"],
        feature_head=meta["feature_head"],
    )
    encoder = EncoderWeights(arrays["w_enc0"], arrays["w_enc1_mu"], arrays["w_enc1_sigma"])
    decoder = DecoderWeights(
        arrays.get("w_dec_a0"), arrays.get("w_dec_a1"), arrays["w_dec_x0"], arrays["w_dec_x1"]
    )
    return ModelWeights(config, encoder, decoder), meta.get("extra", {})
