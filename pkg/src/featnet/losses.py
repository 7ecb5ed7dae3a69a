"""The four-component training objective and its rescaling.

Components, per K-sample Monte-Carlo estimate:

  adjacency   balanced cross-entropy over all N^2 ordered pairs, edge and
              non-edge terms reweighted by 1/d and 1/(1-d) so both classes
              contribute equally regardless of sparsity
  features    negative log-likelihood under the configured head
  kl          closed-form KL of the diagonal-Gaussian embeddings against
              the standard normal prior
  theta       Gaussian prior over the decoder weights, ||theta||^2 / (2 kappa_theta)

The total divides the first two by their values at maximum uncertainty
(N^2 log 2 and N log D) and the KL term by N * F * kappa_kl, so a clueless
model scores exactly 1 + 1 on the reconstruction terms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import SparseAdjacency
from .model import DecoderWeights, EmbeddingDistribution


@dataclass(frozen=True)
class LossConfig:
    kappa_kl: float = 1000.0
    kappa_theta: float = 500.0
    clip_eps: float = 1e-7
    exclude_diagonal: bool = False
    renormalize_features: bool = False

    def __post_init__(self):
        if not (0.0 < self.clip_eps < 0.5):
            raise ValueError("clip_eps must lie in (0, 0.5)")
        if self.kappa_kl <= 0 or self.kappa_theta <= 0:
            raise ValueError("kappa values must be positive")


@dataclass
class LossBreakdown:
    """Raw and rescaled loss components plus the scalar objective.

    l_theta already includes its 1/(2 kappa_theta) factor, so its scaled
    field equals the raw one.
    """

    l_a_balanced: float
    l_x: float
    l_kl: float
    l_theta: float
    l_a_scaled: float
    l_x_scaled: float
    l_kl_scaled: float
    l_theta_scaled: float
    total: float

    def is_finite(self) -> bool:
        return all(
            math.isfinite(v)
            for v in (self.l_a_scaled, self.l_x_scaled, self.l_kl_scaled, self.l_theta_scaled, self.total)
        )

    def nonfinite_component(self) -> str | None:
        for name in ("l_a_scaled", "l_x_scaled", "l_kl_scaled", "l_theta_scaled", "total"):
            if not math.isfinite(getattr(self, name)):
                return name
        return None


def clip_probabilities(p: np.ndarray, clip_eps: float) -> np.ndarray:
    return np.clip(p, clip_eps, 1.0 - clip_eps)


def adjacency_loss_balanced(
    p: np.ndarray,
    a: SparseAdjacency,
    d: float,
    *,
    clip_eps: float = 1e-7,
    exclude_diagonal: bool = False,
) -> float:
    """Balanced cross-entropy between predicted edge probabilities and A.

    ``p`` is (N, N) or (K, N, N); K estimates are averaged. The sum runs
    over all ordered pairs, including the (always-zero) diagonal unless
    ``exclude_diagonal`` is set.
    """
    if d <= 0.0 or d >= 1.0:
        raise ValueError(f"degenerate graph density {d}: balanced loss undefined")
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 2:
        p = p[None, :, :]
    n = a.n
    if p.shape[1:] != (n, n):
        raise ValueError(f"probability matrix must be ({n}, {n}), got {p.shape[1:]}")
    a_dense = a.to_dense()
    pc = clip_probabilities(p, clip_eps)
    terms = a_dense[None, :, :] / d * np.log(pc) + (1.0 - a_dense[None, :, :]) / (1.0 - d) * np.log(1.0 - pc)
    if exclude_diagonal:
        idx = np.arange(n)
        terms[:, idx, idx] = 0.0
    return float(-0.5 * terms.sum() / p.shape[0])


def feature_loss(px: np.ndarray, x: np.ndarray, head: str, *, clip_eps: float = 1e-7) -> float:
    """Negative log-likelihood of the features under the decoder output.

    ``px`` holds head parameters, (N, D) or (K, N, D), averaged over K.
    multinomial: -sum x * log px. bernoulli: full binary cross-entropy.
    gaussian: 0.5 * sum (x - px)^2, unit variance, constants dropped.
    """
    px = np.asarray(px, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if px.ndim == 2:
        px = px[None, :, :]
    if px.shape[1:] != x.shape:
        raise ValueError(f"parameter matrix {px.shape[1:]} does not match features {x.shape}")
    k = px.shape[0]
    if head == "multinomial":
        pc = clip_probabilities(px, clip_eps)
        return float(-(x[None, :, :] * np.log(pc)).sum() / k)
    if head == "bernoulli":
        pc = clip_probabilities(px, clip_eps)
        ll = x[None, :, :] * np.log(pc) + (1.0 - x[None, :, :]) * np.log(1.0 - pc)
        return float(-ll.sum() / k)
    if head == "gaussian":
        return float(0.5 * ((x[None, :, :] - px) ** 2).sum() / k)
    raise ValueError(f"unknown feature head {head!r}")


def kl_loss(dist: EmbeddingDistribution) -> float:
    """KL(q || N(0, I)) for diagonal Gaussians, in closed form."""
    mu, ls = dist.mu, dist.log_sigma
    sigma_sq = np.exp(2.0 * ls)
    return float(0.5 * (mu**2 + sigma_sq - 2.0 * ls - 1.0).sum())


def theta_loss(w: DecoderWeights, kappa_theta: float = 500.0) -> float:
    """Negative log of the N(0, kappa_theta I) decoder prior, constants dropped."""
    sq = 0.0
    for mat in (w.w_adj0, w.w_adj1, w.w_feat0, w.w_feat1):
        if mat is not None:
            sq += float((mat**2).sum())
    return sq / (2.0 * kappa_theta)


def total_loss(
    l_a_balanced: float,
    l_x: float,
    l_kl: float,
    l_theta: float,
    *,
    n: int,
    d_features: int,
    f: int,
    cfg: LossConfig,
) -> LossBreakdown:
    """Assemble the scalar objective from the four components.

    l_theta must already carry its 1/(2 kappa_theta) factor (as returned
    by :func:`theta_loss`).
    """
    if d_features < 2:
        raise ValueError("feature dimension must be >= 2 for the log D normalizer")
    l_a_scaled = l_a_balanced / (n * n * math.log(2.0))
    l_x_scaled = l_x / (n * math.log(d_features))
    l_kl_scaled = l_kl / (n * f * cfg.kappa_kl)
    l_theta_scaled = l_theta
    return LossBreakdown(
        l_a_balanced=l_a_balanced,
        l_x=l_x,
        l_kl=l_kl,
        l_theta=l_theta,
        l_a_scaled=l_a_scaled,
        l_x_scaled=l_x_scaled,
        l_kl_scaled=l_kl_scaled,
        l_theta_scaled=l_theta_scaled,
        total=l_a_scaled + l_x_scaled + l_kl_scaled + l_theta_scaled,
    )


def feature_targets(x: np.ndarray, head: str, cfg: LossConfig) -> np.ndarray:
    """Targets fed to the feature likelihood.

    Synthetic one-hot features carry additive noise, so their rows do not
    sum exactly to 1; by default they are used as-is. With
    ``renormalize_features`` the multinomial targets are rescaled to unit
    row sums instead.
    """
    x = np.asarray(x, dtype=np.float64)
    if head == "multinomial" and cfg.renormalize_features:
        sums = x.sum(axis=1, keepdims=True)
        if np.any(sums <= 0):
            raise ValueError("cannot renormalize feature rows with nonpositive sums")
        return x / sums
    return x
