"""Exact reverse-mode gradients for the full training objective.

The forward pass records every intermediate needed to backpropagate the
rescaled four-component loss through the decoders, the reparameterized
samples, the overlap merge, and the two-layer graph-convolutional
encoder, holding the standard-normal draws fixed (pathwise gradients).

The tape covers exactly this architecture; it is not a general autodiff.
A finite-difference verifier evaluates the same forward in extended
precision so that oracle noise stays far below the gradient tolerances,
and skips coordinates whose perturbation flips a ReLU or probability-clip
activation (subgradient ambiguity at kinks). ReLU's derivative at exactly
0 is taken to be 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .graph import NormalizedAdjacency, SparseAdjacency, density, normalize_adjacency
from .losses import LossBreakdown, LossConfig, feature_targets, total_loss
from .model import ModelConfig, ModelWeights

MASK_KINDS = ("encoder_relu", "adjacency_relu", "adjacency_clip", "feature_relu", "feature_clip")


@dataclass
class TrainingInputs:
    """Preprocessed, immutable per-graph quantities shared by every epoch."""

    adjacency: SparseAdjacency
    x: np.ndarray          # (N, D) encoder input
    targets: np.ndarray    # (N, D) feature-likelihood targets
    a_hat: NormalizedAdjacency
    a_dense: np.ndarray    # (N, N) 0/1 adjacency
    density: float

    @property
    def n(self) -> int:
        return self.adjacency.n

    @property
    def d(self) -> int:
        return int(self.x.shape[1])


def build_training_inputs(
    adjacency: SparseAdjacency,
    features: np.ndarray,
    loss_cfg: LossConfig,
    feature_head: str,
) -> TrainingInputs:
    x = np.asarray(features, dtype=np.float64)
    dens = density(adjacency)
    if dens <= 0.0 or dens >= 1.0:
        raise ValueError(f"degenerate graph density {dens}: cannot train the balanced loss")
    return TrainingInputs(
        adjacency=adjacency,
        x=x,
        targets=feature_targets(x, feature_head, loss_cfg),
        a_hat=normalize_adjacency(adjacency),
        a_dense=adjacency.to_dense(),
        density=dens,
    )


@dataclass
class ForwardState:
    """Every intermediate of one forward evaluation, in the working dtype."""

    config: ModelConfig
    loss_cfg: LossConfig
    arrays: dict[str, np.ndarray]
    x: np.ndarray
    targets: np.ndarray
    a_prop: Any            # operator used for propagation (CSR or ndarray)
    a_dense: np.ndarray
    dens: float
    eps: np.ndarray        # (K, N, F)
    # encoder
    hact: np.ndarray = None
    hmask: np.ndarray = None
    prop: np.ndarray = None
    mu: np.ndarray = None
    ls: np.ndarray = None
    sig: np.ndarray = None
    xi: np.ndarray = None
    # per-sample decoder intermediates
    adj_gamma: list = field(default_factory=list)
    adj_t: list = field(default_factory=list)
    adj_gmask: list = field(default_factory=list)
    adj_psig: list = field(default_factory=list)
    adj_clipmask: list = field(default_factory=list)
    feat_hx: list = field(default_factory=list)
    feat_hxmask: list = field(default_factory=list)
    feat_px: list = field(default_factory=list)
    feat_clipmask: list = field(default_factory=list)
    # loss scalars in working dtype
    l_a: Any = None
    l_x: Any = None
    l_kl: Any = None
    l_theta: Any = None
    total: Any = None

    def breakdown(self) -> LossBreakdown:
        return total_loss(
            float(self.l_a),
            float(self.l_x),
            float(self.l_kl),
            float(self.l_theta),
            n=self.x.shape[0],
            d_features=self.x.shape[1],
            f=self.config.split.total,
            cfg=self.loss_cfg,
        )

    def masks(self) -> list[np.ndarray]:
        """Every activation/clip pattern, in a fixed order, for kink detection."""
        out = [self.hmask]
        out.extend(self.adj_gmask)
        out.extend(self.adj_clipmask)
        out.extend(self.feat_hxmask)
        out.extend(self.feat_clipmask)
        return out


def forward(
    weights: ModelWeights,
    inputs: TrainingInputs,
    loss_cfg: LossConfig,
    eps: np.ndarray,
) -> ForwardState:
    """Float64 training forward pass with intermediates kept for backward."""
    return _forward_arrays(
        weights.arrays(),
        weights.config,
        x=inputs.x,
        targets=inputs.targets,
        a_prop=inputs.a_hat.matrix,
        a_dense=inputs.a_dense,
        dens=inputs.density,
        loss_cfg=loss_cfg,
        eps=np.asarray(eps, dtype=np.float64),
    )


def loss_at_mean(weights: ModelWeights, inputs: TrainingInputs, loss_cfg: LossConfig) -> LossBreakdown:
    """Deterministic objective with xi = mu (a single zero-noise sample)."""
    n, f = inputs.n, weights.config.split.total
    eps = np.zeros((1, n, f), dtype=np.float64)
    return forward(weights, inputs, loss_cfg, eps).breakdown()


def _forward_arrays(
    arrays: dict[str, np.ndarray],
    config: ModelConfig,
    *,
    x: np.ndarray,
    targets: np.ndarray,
    a_prop: Any,
    a_dense: np.ndarray,
    dens: float,
    loss_cfg: LossConfig,
    eps: np.ndarray,
) -> ForwardState:
    dt = eps.dtype
    split = config.split
    n = x.shape[0]
    k = eps.shape[0]
    f_a, f_ax = split.f_a, split.f_ax
    da = split.adjacency_dims
    ce = dt.type(loss_cfg.clip_eps)
    one = dt.type(1.0)

    st = ForwardState(
        config=config, loss_cfg=loss_cfg, arrays=arrays, x=x, targets=targets,
        a_prop=a_prop, a_dense=a_dense, dens=dens, eps=eps,
    )

    # encoder: shared first layer, then both heads off one propagated hidden
    hpre = a_prop @ (x @ arrays["w_enc0"])
    st.hmask = hpre > 0
    st.hact = np.where(st.hmask, hpre, dt.type(0.0))
    st.prop = a_prop @ st.hact
    mu_raw = st.prop @ arrays["w_enc1_mu"]
    ls_raw = st.prop @ arrays["w_enc1_sigma"]
    st.mu = _merge(mu_raw, f_a, f_ax)
    st.ls = _merge(ls_raw, f_a, f_ax)
    st.sig = np.exp(st.ls)
    st.xi = st.mu[None, :, :] + st.sig[None, :, :] * eps

    deep = config.adjacency_decoder == "deep"
    head = config.feature_head
    inv_d = one / dt.type(dens)
    inv_1md = one / (one - dt.type(dens))

    l_a_sum = dt.type(0.0)
    l_x_sum = dt.type(0.0)
    for ki in range(k):
        xi_adj = st.xi[ki, :, :da]
        if deep:
            gpre = xi_adj @ arrays["w_dec_a0"]
            gmask = gpre > 0
            gamma = np.where(gmask, gpre, dt.type(0.0))
            t = gamma @ arrays["w_dec_a1"]
            z = t @ gamma.T
            st.adj_gamma.append(gamma)
            st.adj_t.append(t)
            st.adj_gmask.append(gmask)
        else:
            z = xi_adj @ xi_adj.T
        psig = _sigmoid(z)
        pclip = np.clip(psig, ce, one - ce)
        clipmask = (psig > ce) & (psig < one - ce)
        st.adj_psig.append(psig)
        st.adj_clipmask.append(clipmask)
        terms = a_dense * inv_d * np.log(pclip) + (one - a_dense) * inv_1md * np.log(one - pclip)
        if loss_cfg.exclude_diagonal:
            idx = np.arange(n)
            terms[idx, idx] = dt.type(0.0)
        l_a_sum = l_a_sum - dt.type(0.5) * terms.sum()

        xi_feat = st.xi[ki, :, f_a:]
        hxpre = xi_feat @ arrays["w_dec_x0"]
        hxmask = hxpre > 0
        hx = np.where(hxmask, hxpre, dt.type(0.0))
        flogits = hx @ arrays["w_dec_x1"]
        st.feat_hx.append(hx)
        st.feat_hxmask.append(hxmask)
        if head == "multinomial":
            px = _softmax(flogits)
            pxc = np.clip(px, ce, one - ce)
            fclipmask = (px > ce) & (px < one - ce)
            l_x_sum = l_x_sum - (targets * np.log(pxc)).sum()
        elif head == "bernoulli":
            px = _sigmoid(flogits)
            pxc = np.clip(px, ce, one - ce)
            fclipmask = (px > ce) & (px < one - ce)
            l_x_sum = l_x_sum - (targets * np.log(pxc) + (one - targets) * np.log(one - pxc)).sum()
        else:  # gaussian
            px = flogits
            fclipmask = np.ones_like(px, dtype=bool)
            l_x_sum = l_x_sum + dt.type(0.5) * ((targets - px) ** 2).sum()
        st.feat_px.append(px)
        st.feat_clipmask.append(fclipmask)

    st.l_a = l_a_sum / dt.type(k)
    st.l_x = l_x_sum / dt.type(k)
    st.l_kl = dt.type(0.5) * (st.mu**2 + np.exp(2.0 * st.ls) - 2.0 * st.ls - one).sum()
    theta_sq = dt.type(0.0)
    for name in ("w_dec_a0", "w_dec_a1", "w_dec_x0", "w_dec_x1"):
        if name in arrays:
            theta_sq = theta_sq + (arrays[name] ** 2).sum()
    st.l_theta = theta_sq / (2.0 * dt.type(loss_cfg.kappa_theta))

    f = split.total
    log2 = np.log(dt.type(2.0))
    logd = np.log(dt.type(x.shape[1]))
    st.total = (
        st.l_a / (dt.type(n) ** 2 * log2)
        + st.l_x / (dt.type(n) * logd)
        + st.l_kl / (dt.type(n) * dt.type(f) * dt.type(loss_cfg.kappa_kl))
        + st.l_theta
    )
    return st


def backward(state: ForwardState) -> dict[str, np.ndarray]:
    """Gradient of state.total w.r.t. every weight matrix, eps held fixed."""
    cfg = state.config
    loss_cfg = state.loss_cfg
    split = cfg.split
    arrays = state.arrays
    x, targets = state.x, state.targets
    a_dense = state.a_dense
    dt = state.eps.dtype
    n = x.shape[0]
    d_feat = x.shape[1]
    k = state.eps.shape[0]
    f_a, f_ax, f = split.f_a, split.f_ax, split.total
    da = split.adjacency_dims
    one = dt.type(1.0)
    ce = dt.type(loss_cfg.clip_eps)

    s_adj = one / (dt.type(k) * dt.type(n) ** 2 * np.log(dt.type(2.0)))
    s_feat = one / (dt.type(k) * dt.type(n) * np.log(dt.type(d_feat)))
    s_kl = one / (dt.type(n) * dt.type(f) * dt.type(loss_cfg.kappa_kl))

    grads = {name: np.zeros_like(arr) for name, arr in arrays.items()}
    # decoder prior: d/dw of ||theta||^2 / (2 kappa_theta)
    for name in ("w_dec_a0", "w_dec_a1", "w_dec_x0", "w_dec_x1"):
        if name in arrays:
            grads[name] += arrays[name] / dt.type(loss_cfg.kappa_theta)

    deep = cfg.adjacency_decoder == "deep"
    inv_d = one / dt.type(state.dens)
    inv_1md = one / (one - dt.type(state.dens))

    d_mu = np.zeros_like(state.mu)
    d_ls = np.zeros_like(state.ls)
    for ki in range(k):
        psig = state.adj_psig[ki]
        pclip = np.clip(psig, ce, one - ce)
        d_pc = dt.type(0.5) * s_adj * ((one - a_dense) * inv_1md / (one - pclip) - a_dense * inv_d / pclip)
        if loss_cfg.exclude_diagonal:
            idx = np.arange(n)
            d_pc[idx, idx] = dt.type(0.0)
        d_z = d_pc * state.adj_clipmask[ki] * psig * (one - psig)

        xi_adj = state.xi[ki, :, :da]
        d_xi = np.zeros((n, f), dtype=dt)
        if deep:
            gamma = state.adj_gamma[ki]
            t = state.adj_t[ki]
            d_t = d_z @ gamma
            d_gamma = d_z.T @ t + d_t @ arrays["w_dec_a1"].T
            grads["w_dec_a1"] += gamma.T @ d_t
            d_gpre = d_gamma * state.adj_gmask[ki]
            grads["w_dec_a0"] += xi_adj.T @ d_gpre
            d_xi[:, :da] += d_gpre @ arrays["w_dec_a0"].T
        else:
            d_xi[:, :da] += (d_z + d_z.T) @ xi_adj

        px = state.feat_px[ki]
        head = cfg.feature_head
        if head == "multinomial":
            pxc = np.clip(px, ce, one - ce)
            g = -(targets / pxc) * state.feat_clipmask[ki] * s_feat
            d_fl = px * (g - (g * px).sum(axis=1, keepdims=True))
        elif head == "bernoulli":
            pxc = np.clip(px, ce, one - ce)
            g = (-(targets / pxc) + (one - targets) / (one - pxc)) * state.feat_clipmask[ki] * s_feat
            d_fl = g * px * (one - px)
        else:
            d_fl = s_feat * (px - targets)
        hx = state.feat_hx[ki]
        xi_feat = state.xi[ki, :, f_a:]
        grads["w_dec_x1"] += hx.T @ d_fl
        d_hxpre = (d_fl @ arrays["w_dec_x1"].T) * state.feat_hxmask[ki]
        grads["w_dec_x0"] += xi_feat.T @ d_hxpre
        d_xi[:, f_a:] += d_hxpre @ arrays["w_dec_x0"].T

        d_mu += d_xi
        d_ls += d_xi * state.sig * state.eps[ki]

    # KL term: d/dmu = mu, d/dls = sigma^2 - 1, each scaled by s_kl
    d_mu += s_kl * state.mu
    d_ls += s_kl * (np.exp(2.0 * state.ls) - one)

    d_mu_raw = _unmerge_grad(d_mu, f_a, f_ax)
    d_ls_raw = _unmerge_grad(d_ls, f_a, f_ax)
    grads["w_enc1_mu"] += state.prop.T @ d_mu_raw
    grads["w_enc1_sigma"] += state.prop.T @ d_ls_raw
    d_prop = d_mu_raw @ arrays["w_enc1_mu"].T + d_ls_raw @ arrays["w_enc1_sigma"].T
    d_hact = state.a_prop @ d_prop  # A_hat is symmetric
    d_hpre = d_hact * state.hmask
    d_xw0 = state.a_prop @ d_hpre
    grads["w_enc0"] += x.T @ d_xw0
    return grads


def _merge(raw: np.ndarray, f_a: int, f_ax: int) -> np.ndarray:
    if f_ax == 0:
        return raw
    half = raw.dtype.type(0.5)
    return np.concatenate(
        [
            raw[:, :f_a],
            half * (raw[:, f_a : f_a + f_ax] + raw[:, f_a + f_ax : f_a + 2 * f_ax]),
            raw[:, f_a + 2 * f_ax :],
        ],
        axis=1,
    )


def _unmerge_grad(d_merged: np.ndarray, f_a: int, f_ax: int) -> np.ndarray:
    if f_ax == 0:
        return d_merged
    half = d_merged.dtype.type(0.5) * d_merged[:, f_a : f_a + f_ax]
    return np.concatenate(
        [d_merged[:, :f_a], half, half, d_merged[:, f_a + f_ax :]], axis=1
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# Finite-difference verification


def finite_diff_check(
    weights: ModelWeights,
    inputs: TrainingInputs,
    loss_cfg: LossConfig,
    eps: np.ndarray,
    step: float = 1e-6,
    return_details: bool = False,
):
    """Compare analytic gradients against central finite differences.

    The numeric side evaluates the forward pass in extended precision
    (this keeps rounding noise in the difference quotient below ~1e-12
    even for small gradient entries). Coordinates whose +/- step flips
    any ReLU or clip pattern relative to the unperturbed pass are skipped
    and reported, since the two-sided quotient straddles a kink there.

    Returns the max over checked coordinates of
    |g_analytic - g_numeric| / max(1e-12, |g_analytic| + |g_numeric|).
    """
    eps64 = np.asarray(eps, dtype=np.float64)
    state = forward(weights, inputs, loss_cfg, eps64)
    grads = backward(state)

    dt = np.dtype(np.longdouble)
    hi_kwargs = dict(
        x=inputs.x.astype(dt),
        targets=inputs.targets.astype(dt),
        a_prop=inputs.a_hat.to_dense().astype(dt),
        a_dense=inputs.a_dense.astype(dt),
        dens=inputs.density,
        loss_cfg=loss_cfg,
        eps=eps64.astype(dt),
    )
    base_arrays = {name: arr.astype(dt) for name, arr in weights.arrays().items()}
    base_state = _forward_arrays(base_arrays, weights.config, **hi_kwargs)
    base_masks = base_state.masks()
    h = dt.type(step)

    max_rel = 0.0
    skipped = 0
    checked = 0
    per_weight: dict[str, float] = {}
    for name, arr in base_arrays.items():
        worst = 0.0
        flat = arr.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            totals = []
            kinked = False
            for sign in (1.0, -1.0):
                flat[idx] = orig + dt.type(sign) * h
                st = _forward_arrays(base_arrays, weights.config, **hi_kwargs)
                if not _masks_equal(st.masks(), base_masks):
                    kinked = True
                    break
                totals.append(st.total)
            flat[idx] = orig
            if kinked:
                skipped += 1
                continue
            g_num = float((totals[0] - totals[1]) / (2.0 * h))
            g_ana = float(grads[name].reshape(-1)[idx])
            rel = abs(g_ana - g_num) / max(1e-12, abs(g_ana) + abs(g_num))
            worst = max(worst, rel)
            checked += 1
        per_weight[name] = worst
        max_rel = max(max_rel, worst)

    if return_details:
        return max_rel, {"per_weight": per_weight, "skipped": skipped, "checked": checked}
    return max_rel


def _masks_equal(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))
