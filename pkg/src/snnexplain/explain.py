"""Prototype-directed perturbation explanations.

Pipeline for one input: embed it, find the nearest class prototype, pick the
embedding coordinates already closest to that prototype, sample sparse
half-normal perturbations pointing toward the prototype, push them through
the decoder, and mark the q input features whose reconstructions move most.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .autoencoder import AEModel, decode
from .siamese import SNNModel, embed


@dataclass(frozen=True)
class PerturbationConfig:
    s: int
    q: int
    n_samples: int = 5000
    sigma_factor: float = 0.1
    sigma_floor: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("s must be >= 1")
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.sigma_factor <= 0:
            raise ValueError("sigma_factor must be positive")
        if self.sigma_floor <= 0:
            raise ValueError("sigma_floor must be positive")


@dataclass
class PrototypeSet:
    """Per-class mean embeddings c_k with their example counts."""

    classes: np.ndarray
    prototypes: np.ndarray  # (C, D)
    counts: np.ndarray

    def __len__(self):
        return len(self.classes)

    def prototype_for(self, class_id) -> np.ndarray:
        pos = np.flatnonzero(self.classes == class_id)
        if len(pos) == 0:
            raise KeyError(f"no prototype for class {class_id}")
        return self.prototypes[pos[0]]


@dataclass
class ExplanationResult:
    target_class: int
    important: np.ndarray   # sorted embedding indices, |important| == s
    sigma: float
    mean_change: np.ndarray  # length m, mean |change| per input feature
    mask: np.ndarray         # binary, length m, exactly q ones
    config: PerturbationConfig = field(repr=False, default=None)


def compute_prototypes(embeddings: Sequence[np.ndarray],
                       labels: Sequence[int]) -> PrototypeSet:
    """Arithmetic per-class mean of the embeddings."""
    h = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    if h.size == 0:
        raise ValueError("no embeddings given")
    classes = np.unique(labels)
    protos = np.stack([h[labels == c].mean(axis=0) for c in classes])
    counts = np.array([int(np.sum(labels == c)) for c in classes])
    return PrototypeSet(classes, protos, counts)


def nearest_prototype(h: np.ndarray, protos: PrototypeSet):
    """Class of the closest prototype; ties go to the smallest class id."""
    if len(protos) == 0:
        raise ValueError("empty prototype set")
    d = np.linalg.norm(protos.prototypes - np.asarray(h, float), axis=1)
    order = np.argsort(protos.classes)
    best = order[np.argmin(d[order])]
    return protos.classes[best]


def select_important_features(h: np.ndarray, c_k: np.ndarray,
                              s: int) -> np.ndarray:
    """Indices of the s coordinates of |h - c_k| with smallest values,
    ties broken by smaller index, returned sorted ascending."""
    h = np.asarray(h, float)
    c_k = np.asarray(c_k, float)
    if h.shape != c_k.shape:
        raise ValueError(f"shape mismatch: {h.shape} vs {c_k.shape}")
    if not 1 <= s <= len(h):
        raise ValueError(f"s={s} out of range 1..{len(h)}")
    order = np.argsort(np.abs(h - c_k), kind="stable")
    return np.sort(order[:s])


def perturbation_sigma(h: np.ndarray, c_k: np.ndarray, sigma_factor: float,
                       sigma_floor: float) -> float:
    """sigma_factor times the smallest coordinate gap |h_i - c_ki|,
    floored away from zero."""
    gap = float(np.min(np.abs(np.asarray(h, float) - np.asarray(c_k, float))))
    return max(sigma_factor * gap, sigma_floor)


def sample_perturbations(important: np.ndarray, sigma: float, h: np.ndarray,
                         c_k: np.ndarray, n_samples: int,
                         seed: int) -> np.ndarray:
    """(n_samples, D) sparse deltas: half-normal magnitude of scale sigma on
    the important coordinates, signed toward the prototype, zero elsewhere."""
    important = np.asarray(important, dtype=int)
    if len(important) == 0:
        raise ValueError("important feature set is empty")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    h = np.asarray(h, float)
    c_k = np.asarray(c_k, float)
    rng = np.random.default_rng(seed)
    mag = np.abs(rng.normal(0.0, sigma, size=(n_samples, len(important))))
    sign = np.where(c_k[important] >= h[important], 1.0, -1.0)
    deltas = np.zeros((n_samples, len(h)))
    deltas[:, important] = sign * mag
    return deltas


def mean_feature_change(ae: AEModel, h: np.ndarray, deltas: np.ndarray,
                        batch_size: int = 512) -> np.ndarray:
    """Mean absolute per-feature change of psi(h + delta) relative to psi(h).

    Decoder calls are chunked; the reduction runs in fixed sample order."""
    h = np.asarray(h, float)
    base = decode(ae, h)
    total = np.zeros_like(base)
    n = len(deltas)
    for start in range(0, n, batch_size):
        chunk = deltas[start:start + batch_size]
        rec = decode(ae, h[None] + chunk)
        if not np.all(np.isfinite(rec)):
            bad = start + int(np.argmax(~np.isfinite(rec).all(
                axis=tuple(range(1, rec.ndim)))))
            raise ValueError(f"non-finite decoder output for sample {bad}")
        total += np.sum(np.abs(rec - base[None]), axis=0)
    return total / n


def top_q_mask(mean_change: np.ndarray, q: int) -> np.ndarray:
    """Binary mask with ones at the q largest entries, ties to smaller index."""
    mean_change = np.asarray(mean_change, float)
    if not 1 <= q <= len(mean_change):
        raise ValueError(f"q={q} out of range 1..{len(mean_change)}")
    order = np.argsort(-mean_change, kind="stable")
    mask = np.zeros(len(mean_change))
    mask[order[:q]] = 1.0
    return mask


def explain(x: np.ndarray, snn: SNNModel, ae: AEModel, protos: PrototypeSet,
            cfg: PerturbationConfig) -> ExplanationResult:
    """Full explanation for one input.

    The target class is whatever the nearest prototype says, not any
    external label, so a misclassified input is explained as the class the
    embedder put it in."""
    h = embed(snn, x)
    k = nearest_prototype(h, protos)
    c_k = protos.prototype_for(k)
    important = select_important_features(h, c_k, cfg.s)
    sigma = perturbation_sigma(h, c_k, cfg.sigma_factor, cfg.sigma_floor)
    deltas = sample_perturbations(important, sigma, h, c_k, cfg.n_samples,
                                  cfg.seed)
    mean_change = mean_feature_change(ae, h, deltas)
    mask = top_q_mask(mean_change, cfg.q)
    return ExplanationResult(target_class=int(k), important=important,
                             sigma=sigma, mean_change=mean_change, mask=mask,
                             config=cfg)
