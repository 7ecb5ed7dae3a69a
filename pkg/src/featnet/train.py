"""Glorot initialization, Adam, and the full-batch training loop.

Training is a pure function of (graph, config): one RNG stream seeds the
weights and an independent stream supplies the per-epoch standard-normal
draws, both derived from the master seed, so runs are reproducible and
changing the sample count K never perturbs initialization.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gradients import TrainingInputs, backward, build_training_inputs, forward, loss_at_mean
from .losses import LossBreakdown, LossConfig
from .model import DecoderWeights, DimensionSplit, EncoderWeights, ModelConfig, ModelWeights
from .synth import FeaturedGraph


class TrainingDivergedError(RuntimeError):
    """Raised when a loss component stops being finite."""

    def __init__(self, epoch: int, component: str):
        super().__init__(f"non-finite loss at epoch {epoch}: component {component}")
        self.epoch = epoch
        self.component = component


def glorot_init(shape: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    """Uniform on [-b, b] with b = sqrt(6 / (fan_in + fan_out))."""
    fan_in, fan_out = shape
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"invalid shape {shape}")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_model_weights(config: ModelConfig, rng: np.random.Generator) -> ModelWeights:
    """Glorot-initialize every matrix, in a fixed order."""
    split = config.split
    encoder = EncoderWeights(
        w0=glorot_init((config.feature_dim, config.h_enc), rng),
        w1_mu=glorot_init((config.h_enc, split.raw_width), rng),
        w1_sigma=glorot_init((config.h_enc, split.raw_width), rng),
    )
    if config.adjacency_decoder == "deep":
        w_adj0 = glorot_init((split.adjacency_dims, config.h_dec), rng)
        w_adj1 = glorot_init((config.h_dec, config.h_dec), rng)
    else:
        w_adj0 = w_adj1 = None
    decoder = DecoderWeights(
        w_adj0=w_adj0,
        w_adj1=w_adj1,
        w_feat0=glorot_init((split.feature_dims, config.h_dec), rng),
        w_feat1=glorot_init((config.h_dec, config.feature_dim), rng),
    )
    return ModelWeights(config=config, encoder=encoder, decoder=decoder)


@dataclass
class AdamState:
    """First/second moment estimates and hyperparameters."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_weights(cls, weights: ModelWeights, lr: float) -> "AdamState":
        return cls(
            m={k: np.zeros_like(a) for k, a in weights.arrays().items()},
            v={k: np.zeros_like(a) for k, a in weights.arrays().items()},
            t=0,
            lr=lr,
        )


def adam_step(weights: ModelWeights, grads: dict[str, np.ndarray], state: AdamState) -> None:
    """One Adam update, applied in place to the weight arrays."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, arr in weights.arrays().items():
        g = grads[name]
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        arr -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass(frozen=True)
class TrainConfig:
    split: DimensionSplit
    epochs: int = 1000
    k_samples: int = 5
    lr: float = 0.01
    seed: int = 0
    h_enc: int = 50
    h_dec: int = 50
    adjacency_decoder: str = "deep"
    feature_head: str = "multinomial"
    loss: LossConfig = field(default_factory=LossConfig)
    track_loss_at_mean: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.k_samples < 1:
            raise ValueError("k_samples must be >= 1")


TRACE_COLUMNS = (
    "epoch",
    "l_a_scaled",
    "l_x_scaled",
    "l_kl_scaled",
    "l_theta_scaled",
    "total",
    "total_at_mean",
)


@dataclass
class TrainTrace:
    """Per-epoch loss breakdowns plus the deterministic at-mean totals."""

    breakdowns: list[LossBreakdown]
    totals_at_mean: list[float]

    def __len__(self) -> int:
        return len(self.breakdowns)

    @property
    def best_epoch(self) -> int:
        totals = [b.total for b in self.breakdowns]
        return int(np.argmin(totals))

    @property
    def best_total(self) -> float:
        return self.breakdowns[self.best_epoch].total

    @property
    def best_adjacency(self) -> float:
        return min(b.l_a_scaled for b in self.breakdowns)

    @property
    def best_feature(self) -> float:
        return min(b.l_x_scaled for b in self.breakdowns)

    @property
    def final_total(self) -> float:
        return self.breakdowns[-1].total

    def rows(self) -> list[dict]:
        out = []
        for epoch, b in enumerate(self.breakdowns):
            at_mean = self.totals_at_mean[epoch] if self.totals_at_mean else ""
            out.append(
                {
                    "epoch": epoch,
                    "l_a_scaled": b.l_a_scaled,
                    "l_x_scaled": b.l_x_scaled,
                    "l_kl_scaled": b.l_kl_scaled,
                    "l_theta_scaled": b.l_theta_scaled,
                    "total": b.total,
                    "total_at_mean": at_mean,
                }
            )
        return out

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS)
            writer.writeheader()
            for row in self.rows():
                writer.writerow({k: _fmt(v) for k, v in row.items()})


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def train(
    graph: FeaturedGraph,
    cfg: TrainConfig,
    inputs: TrainingInputs | None = None,
) -> tuple[ModelWeights, TrainTrace]:
    """Full-batch training; returns final weights and the complete trace.

    ``inputs`` may be passed to reuse preprocessing across runs on the
    same graph; it must have been built with the same loss config and
    feature head.
    """
    model_cfg = ModelConfig(
        split=cfg.split,
        feature_dim=graph.feature_dim,
        h_enc=cfg.h_enc,
        h_dec=cfg.h_dec,
        adjacency_decoder=cfg.adjacency_decoder,
        feature_head=cfg.feature_head,
    )
    if inputs is None:
        inputs = build_training_inputs(graph.adjacency, graph.features, cfg.loss, cfg.feature_head)
    init_rng = np.random.default_rng([cfg.seed, 0])
    eps_rng = np.random.default_rng([cfg.seed, 1])
    weights = init_model_weights(model_cfg, init_rng)
    adam = AdamState.for_weights(weights, lr=cfg.lr)
    n, f = inputs.n, cfg.split.total

    breakdowns: list[LossBreakdown] = []
    at_mean: list[float] = []
    for epoch in range(cfg.epochs):
        eps = eps_rng.standard_normal((cfg.k_samples, n, f))
        state = forward(weights, inputs, cfg.loss, eps)
        bd = state.breakdown()
        if not bd.is_finite():
            raise TrainingDivergedError(epoch, bd.nonfinite_component() or "total")
        grads = backward(state)
        if cfg.track_loss_at_mean:
            at_mean.append(loss_at_mean(weights, inputs, cfg.loss).total)
        adam_step(weights, grads, adam)
        breakdowns.append(bd)
    return weights, TrainTrace(breakdowns=breakdowns, totals_at_mean=at_mean)
