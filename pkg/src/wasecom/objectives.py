"""Penalized worst-case training objectives over Wasserstein balls.

Both training phases minimize the same penalized dual form

    penalty + E_batch[ sup_v { loss(v) - dual_var * ||v - center||^2 } ]

with penalty = dual_var * radius^2.  The inner phase perturbs the source
samples and scores reconstruction fidelity; the outer phase perturbs the
received signal and scores the channel codec.  The sup is found either by
projected gradient ascent (hard path) or replaced by a temperature-smoothed
log-sum-exp over Gaussian samples.  Perturbations enter the final graph as
constant offsets added to the live forward pass, so parameters upstream of
the perturbation point still receive gradients (the envelope/Danskin rule).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import models as M
from . import tensor as T
from .channel import ChannelConfig, apply_realization, transmit
from .perturb import PerturbMethod, PerturbSpec, fgsm, gaussian_samples, pgd
from .tensor import Tensor


@dataclass
class RobustnessConfig:
    rho: float = 0.0            # source-side ball radius
    mu: float = 0.0             # signal-side ball radius
    lam: float = 1.0            # inner dual variable
    gamma: float = 1.0          # outer dual variable
    epsilon_temp: float = 1.0   # LSE temperature
    use_lse: bool = False
    lambda_learnable: bool = True

    def __post_init__(self):
        if self.rho < 0 or self.mu < 0:
            raise ValueError("radii must be nonnegative")
        if self.lam < 0 or self.gamma < 0:
            raise ValueError("dual variables must be nonnegative")
        if self.epsilon_temp <= 0:
            raise ValueError("epsilon_temp must be positive")


@dataclass
class DualObjectiveValue:
    total: Tensor               # differentiable scalar: penalty + expectation
    penalty_term: float         # dual_var * radius^2
    expectation_term: float
    mean_cost: float            # cost weight for the envelope dual update
    worst_case: np.ndarray | None = None


def transport_cost(a, b) -> np.ndarray:
    """Per-sample squared Euclidean ground cost between row-aligned batches."""
    da = a.data if isinstance(a, Tensor) else np.asarray(a, dtype=float)
    db = b.data if isinstance(b, Tensor) else np.asarray(b, dtype=float)
    if da.shape != db.shape:
        raise ValueError(f"transport_cost: shape mismatch {da.shape} vs {db.shape}")
    d = (da - db).reshape(len(da), -1)
    return np.sum(d * d, axis=1)


def _cost_in_graph(leaf: Tensor, center: np.ndarray) -> Tensor:
    return (leaf - Tensor(center)).square().sum(axis=1)


def lse_smooth(values, epsilon_temp: float) -> float:
    """epsilon * log(mean_k exp(v_k / epsilon)), stabilized by max subtraction.

    Sits in the sandwich max(v) - epsilon*log(K) <= result <= max(v).
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("lse_smooth of an empty value set")
    if epsilon_temp <= 0:
        raise ValueError("epsilon_temp must be positive")
    m = v.max()
    return float(m + epsilon_temp * np.log(np.mean(np.exp((v - m) / epsilon_temp))))


def lse_combine(scored: list[Tensor], epsilon_temp: float) -> Tensor:
    """In-graph per-sample LSE across K scored copies; max is detached."""
    m = np.maximum.reduce([s.data for s in scored])
    acc = T.exp(T.scale(scored[0] - Tensor(m), 1.0 / epsilon_temp))
    for s in scored[1:]:
        acc = acc + T.exp(T.scale(s - Tensor(m), 1.0 / epsilon_temp))
    return Tensor(m) + T.scale(T.log(T.scale(acc, 1.0 / len(scored))), epsilon_temp)


def penalized_sup_hard(per_sample_loss_fn, x: np.ndarray, dual_var: float,
                       spec: PerturbSpec) -> np.ndarray:
    """Ascend loss(v) - dual_var * ||v - x||^2 inside the spec's ball; return v*."""

    def scored(leaf: Tensor) -> Tensor:
        return per_sample_loss_fn(leaf) - T.scale(_cost_in_graph(leaf, x), dual_var)

    if spec.method is PerturbMethod.FGSM:
        return fgsm(scored, x, spec)
    return pgd(scored, x, spec)


# ----------------------------------------------------------------- pipelines
def _image_pipeline(bundle, x_tensor: Tensor, realization) -> Tensor:
    s = M.semantic_encode(bundle, x_tensor)
    z = apply_realization(M.channel_encode(bundle, s), realization)
    return M.semantic_decode(bundle, M.channel_decode(bundle, z))


def _text_pipeline_from_emb(bundle, emb_flat: Tensor, realization) -> Tensor:
    s = M.semantic_encode_from_embeddings(bundle, emb_flat)
    z = apply_realization(M.channel_encode(bundle, s), realization)
    return M.semantic_decode(bundle, M.channel_decode(bundle, z))


def clean_inner_loss(bundle, x, channel_cfg: ChannelConfig, rng) -> Tensor:
    """Plain reconstruction loss through one stochastic channel draw."""
    if bundle.task is M.TaskKind.TEXT:
        s = M.semantic_encode(bundle, x)
        u = M.channel_encode(bundle, s)
        z, _ = transmit(channel_cfg, u, rng)
        out = M.semantic_decode(bundle, M.channel_decode(bundle, z))
        return M.per_sample_reconstruction_loss(bundle, x, out).mean()
    xt = Tensor(np.asarray(x, dtype=float))
    u = M.channel_encode(bundle, M.semantic_encode(bundle, xt))
    z, _ = transmit(channel_cfg, u, rng)
    out = M.semantic_decode(bundle, M.channel_decode(bundle, z))
    return M.per_sample_reconstruction_loss(bundle, xt, out).mean()


def clean_outer_loss(bundle, x, channel_cfg: ChannelConfig, rng) -> Tensor:
    """Channel-codec distortion on a frozen semantic target."""
    s0 = M.semantic_encode(bundle.frozen(), x).data
    u = M.channel_encode(bundle, Tensor(s0))
    z, _ = transmit(channel_cfg, u, rng)
    s_hat = M.channel_decode(bundle, z)
    return M.per_sample_channel_loss(Tensor(s0), s_hat).mean()


# ----------------------------------------------------------- dual objectives
def inner_dual_loss(bundle, x, channel_cfg: ChannelConfig, rob: RobustnessConfig,
                    spec: PerturbSpec, rng: np.random.Generator,
                    attack_rng: np.random.Generator | None = None) -> DualObjectiveValue:
    """Source-side robust objective; gradients feed the semantic codec.

    One channel realization is drawn against the clean pass and reused for the
    attack search and the final differentiable pass.
    """
    frozen = bundle.frozen()
    is_text = bundle.task is M.TaskKind.TEXT
    if is_text:
        center = M.embed_tokens(frozen, x).data
        u0 = M.channel_encode(frozen, M.semantic_encode_from_embeddings(frozen, Tensor(center)))
    else:
        center = np.asarray(x, dtype=float)
        u0 = M.channel_encode(frozen, M.semantic_encode(frozen, Tensor(center)))
    _, realization = transmit(channel_cfg, u0, rng)

    spec = dataclasses.replace(spec, radius=rob.rho)
    lam = rob.lam

    def frozen_loss(leaf: Tensor) -> Tensor:
        if is_text:
            out = _text_pipeline_from_emb(frozen, leaf, realization)
        else:
            out = _image_pipeline(frozen, leaf, realization)
        return M.per_sample_reconstruction_loss(frozen, x, out)

    def live_scored(offsets: np.ndarray) -> Tensor:
        cost = np.sum(offsets.reshape(len(offsets), -1) ** 2, axis=1)
        if is_text:
            emb = M.embed_tokens(bundle, x) + Tensor(offsets)
            out = _text_pipeline_from_emb(bundle, emb, realization)
        else:
            out = _image_pipeline(bundle, Tensor(center + offsets), realization)
        loss = M.per_sample_reconstruction_loss(bundle, x, out)
        return loss - T.scale(Tensor(cost), lam), cost

    if rob.use_lse:
        draws = gaussian_samples(center, spec, attack_rng or rng)
        scored_list, costs, weights = [], [], []
        for draw in draws:
            scored, cost = live_scored(draw - center)
            scored_list.append(scored)
            costs.append(cost)
        expectation = lse_combine(scored_list, rob.epsilon_temp).mean()
        # envelope weight: softmax of scores at the optimum
        stacked = np.stack([s.data for s in scored_list])
        soft = np.exp((stacked - stacked.max(axis=0)) / rob.epsilon_temp)
        soft /= soft.sum(axis=0)
        mean_cost = float(np.mean(np.sum(soft * np.stack(costs), axis=0)))
        worst = None
    else:
        if spec.method in (PerturbMethod.NONE, PerturbMethod.GAUSSIAN) or rob.rho == 0:
            worst = center.copy()
        else:
            worst = penalized_sup_hard(frozen_loss, center, lam, spec)
        scored, cost = live_scored(worst - center)
        expectation = scored.mean()
        mean_cost = float(np.mean(cost))

    penalty = lam * rob.rho**2
    total = expectation + Tensor(penalty)
    return DualObjectiveValue(total=total, penalty_term=penalty,
                              expectation_term=float(expectation.data),
                              mean_cost=mean_cost, worst_case=worst)


def outer_dual_loss(bundle, x, channel_cfg: ChannelConfig, rob: RobustnessConfig,
                    spec: PerturbSpec, rng: np.random.Generator,
                    attack_rng: np.random.Generator | None = None) -> DualObjectiveValue:
    """Signal-side robust objective; gradients feed the channel codec.

    The semantic vector is held fixed; the received signal is perturbed inside
    a ball of radius mu.  The optimal offset re-enters the graph on top of the
    transmitted signal so the channel encoder keeps its gradient path.
    """
    frozen = bundle.frozen()
    s0 = M.semantic_encode(frozen, x).data
    u = M.channel_encode(bundle, Tensor(s0))
    z, realization = transmit(channel_cfg, u, rng)
    z0 = z.data
    spec = dataclasses.replace(spec, radius=rob.mu)
    gamma = rob.gamma

    def frozen_loss(leaf: Tensor) -> Tensor:
        return M.per_sample_channel_loss(Tensor(s0), M.channel_decode(frozen, leaf))

    def live_scored(offsets: np.ndarray):
        cost = np.sum(offsets**2, axis=1)
        s_hat = M.channel_decode(bundle, z + Tensor(offsets))
        loss = M.per_sample_channel_loss(Tensor(s0), s_hat)
        return loss - T.scale(Tensor(cost), gamma), cost

    if rob.use_lse:
        draws = gaussian_samples(z0, spec, attack_rng or rng)
        scored_list, costs = [], []
        for draw in draws:
            scored, cost = live_scored(draw - z0)
            scored_list.append(scored)
            costs.append(cost)
        expectation = lse_combine(scored_list, rob.epsilon_temp).mean()
        stacked = np.stack([s.data for s in scored_list])
        soft = np.exp((stacked - stacked.max(axis=0)) / rob.epsilon_temp)
        soft /= soft.sum(axis=0)
        mean_cost = float(np.mean(np.sum(soft * np.stack(costs), axis=0)))
        worst = None
    else:
        if spec.method in (PerturbMethod.NONE, PerturbMethod.GAUSSIAN) or rob.mu == 0:
            worst = z0.copy()
        else:
            worst = penalized_sup_hard(frozen_loss, z0, gamma, spec)
        scored, cost = live_scored(worst - z0)
        expectation = scored.mean()
        mean_cost = float(np.mean(cost))

    penalty = gamma * rob.mu**2
    total = expectation + Tensor(penalty)
    return DualObjectiveValue(total=total, penalty_term=penalty,
                              expectation_term=float(expectation.data),
                              mean_cost=mean_cost, worst_case=worst)


def update_duals(rob: RobustnessConfig, dual_lr: float,
                 inner_cost: float | None = None,
                 outer_cost: float | None = None) -> RobustnessConfig:
    """Projected gradient step on the dual variables.

    The envelope derivative of the penalized objective in the dual variable is
    radius^2 - E[cost at the optimizer], so descent moves the variable by its
    negation and clips at zero.
    """
    lam, gamma = rob.lam, rob.gamma
    if rob.lambda_learnable and inner_cost is not None:
        lam = max(0.0, lam - dual_lr * (rob.rho**2 - inner_cost))
    if rob.lambda_learnable and outer_cost is not None:
        gamma = max(0.0, gamma - dual_lr * (rob.mu**2 - outer_cost))
    return dataclasses.replace(rob, lam=lam, gamma=gamma)
