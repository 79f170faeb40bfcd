"""Siamese training: pair construction, contrastive loss, and the embedding
map. Both branches share a single NetworkState evaluated twice per pair."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .layers import LayerSpec
from .network import (NetworkState, add_grads, backward, build_network,
                      forward, l2_regularizer, zero_grads)
from .optim import Optimizer, OptimizerConfig

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Raised when a training run produces a non-finite loss."""


@dataclass(frozen=True)
class ContrastiveParams:
    tau: float = 1.0
    mu_reg: float = 0.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.mu_reg < 0:
            raise ValueError("mu_reg must be nonnegative")


@dataclass
class PairSet:
    """Index pairs with binary labels; z == 0 means same class."""

    i: np.ndarray
    j: np.ndarray
    z: np.ndarray

    def __len__(self):
        return len(self.i)


@dataclass
class SNNModel:
    subnet: NetworkState

    @property
    def embedding_dim(self) -> int:
        return self.subnet.output_shape[0]


@dataclass
class TrainingHistory:
    epoch_loss: List[float] = field(default_factory=list)
    converged: bool = True


def build_pair_set(labels: Sequence[int], pairs_per_anchor: int,
                   seed: int) -> PairSet:
    """Balanced per-anchor sampling: for every example, `pairs_per_anchor`
    same-class and `pairs_per_anchor` different-class partners."""
    labels = np.asarray(labels)
    if pairs_per_anchor < 1:
        raise ValueError("pairs_per_anchor must be >= 1")
    classes, counts = np.unique(labels, return_counts=True)
    if len(classes) < 2:
        raise ValueError("need at least 2 classes to form negative pairs")
    for c, n in zip(classes, counts):
        if n < 2:
            raise ValueError(f"class {c} has a single example; "
                             "cannot form a positive pair")
    rng = np.random.default_rng(seed)
    anchors, partners, zs = [], [], []
    idx = np.arange(len(labels))
    for i in idx:
        same = idx[(labels == labels[i]) & (idx != i)]
        other = idx[labels != labels[i]]
        pos = rng.choice(same, size=pairs_per_anchor,
                         replace=len(same) < pairs_per_anchor)
        neg = rng.choice(other, size=pairs_per_anchor,
                         replace=len(other) < pairs_per_anchor)
        anchors.extend([i] * (2 * pairs_per_anchor))
        partners.extend(pos)
        partners.extend(neg)
        zs.extend([0] * pairs_per_anchor)
        zs.extend([1] * pairs_per_anchor)
    return PairSet(np.array(anchors), np.array(partners), np.array(zs))


def contrastive_loss(h_i: np.ndarray, h_j: np.ndarray, z: int, tau: float):
    """Value and exact gradients of the pairwise contrastive loss.

    Similar pairs (z=0) are penalized by squared distance; dissimilar pairs
    (z=1) by the squared margin shortfall max(0, tau - dist)^2. The hinge
    corner and the coincident-point case both use the zero subgradient.
    """
    h_i = np.asarray(h_i, dtype=np.float64)
    h_j = np.asarray(h_j, dtype=np.float64)
    if h_i.shape != h_j.shape:
        raise ValueError(f"embedding shapes differ: {h_i.shape} vs {h_j.shape}")
    if tau <= 0:
        raise ValueError("tau must be positive")
    value, gi = _contrastive_batch(h_i[None], h_j[None],
                                   np.array([z]), tau)
    return float(value[0]), gi[0], -gi[0]


def _contrastive_batch(hi: np.ndarray, hj: np.ndarray, z: np.ndarray,
                       tau: float):
    """Vectorized per-pair loss values and gradients w.r.t. hi."""
    diff = hi - hj
    sq = np.sum(diff * diff, axis=1)
    dist = np.sqrt(sq)
    shortfall = np.maximum(0.0, tau - dist)
    value = np.where(z == 0, sq, shortfall ** 2)
    # d(shortfall^2)/dhi = -2*shortfall*diff/dist; zero at dist=0 or inactive hinge
    safe = np.where(dist > 0, dist, 1.0)
    neg_scale = np.where((dist > 0) & (shortfall > 0),
                         -2.0 * shortfall / safe, 0.0)
    scale = np.where(z == 0, 2.0, neg_scale)
    return value, scale[:, None] * diff


def pair_loss_and_grads(subnet: NetworkState, xi: np.ndarray, xj: np.ndarray,
                        z: np.ndarray, params: ContrastiveParams,
                        reg_scale: float = 1.0):
    """Summed contrastive loss over a batch of pairs, plus parameter grads.

    `reg_scale` scales the mu_reg * R(W) term (used to spread the
    regularizer across minibatches)."""
    acts_i = forward(subnet, xi)
    acts_j = forward(subnet, xj)
    values, d_hi = _contrastive_batch(acts_i[-1], acts_j[-1], z, params.tau)
    loss = float(np.sum(values))
    grads, _ = backward(subnet, acts_i, d_hi)
    grads_j, _ = backward(subnet, acts_j, -d_hi)
    add_grads(grads, grads_j)
    if params.mu_reg > 0 and reg_scale > 0:
        rv, rg = l2_regularizer(subnet)
        loss += reg_scale * params.mu_reg * rv
        add_grads(grads, rg, reg_scale * params.mu_reg)
    return loss, grads


def total_loss(subnet: NetworkState, inputs: np.ndarray, pairs: PairSet,
               params: ContrastiveParams) -> float:
    """Full objective: sum of pair losses plus mu_reg * R(W)."""
    h = forward(subnet, inputs)[-1]
    values, _ = _contrastive_batch(h[pairs.i], h[pairs.j], pairs.z, params.tau)
    rv, _ = l2_regularizer(subnet)
    return float(np.sum(values)) + params.mu_reg * rv


def train_snn(inputs: np.ndarray, pairs: PairSet, specs: Sequence[LayerSpec],
              params: ContrastiveParams, opt: OptimizerConfig, epochs: int,
              batch_size: int = 64, init_seed: int = 0) -> Tuple[SNNModel, TrainingHistory]:
    """Train the shared subnet by minibatch gradient descent over the pairs."""
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    inputs = np.asarray(inputs, dtype=np.float64)
    subnet = build_network(specs, inputs.shape[1:], init_seed)
    if subnet.output_shape[0] < 2 or len(subnet.output_shape) != 1:
        raise ValueError("subnet must output a flat embedding of length >= 2")
    optimizer = Optimizer(opt)
    rng = np.random.default_rng(opt.seed)
    n = len(pairs)
    history = TrainingHistory()
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            sel = order[start:start + batch_size]
            loss, grads = pair_loss_and_grads(
                subnet, inputs[pairs.i[sel]], inputs[pairs.j[sel]],
                pairs.z[sel], params, reg_scale=len(sel) / n)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite contrastive loss at epoch {epoch}")
            optimizer.step(subnet, grads)
        history.epoch_loss.append(total_loss(subnet, inputs, pairs, params))
    tail = history.epoch_loss[-3:]
    if len(tail) == 3 and not (tail[0] >= tail[1] >= tail[2]):
        history.converged = False
        log.warning("siamese training did not converge: last losses %s", tail)
    return SNNModel(subnet), history


def embed(model: SNNModel, x: np.ndarray) -> np.ndarray:
    """h = f(x); accepts a single input or a batch."""
    return forward(model.subnet, x)[-1]
