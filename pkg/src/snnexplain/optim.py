"""Gradient-descent optimizers: plain SGD and Adam."""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import List

import numpy as np

from .network import NetworkState


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.method!r}")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


class Optimizer:
    """Updates NetworkState parameters in place; deterministic."""

    def __init__(self, cfg: OptimizerConfig):
        self.cfg = cfg
        self.t = 0
        self._m: List[List[np.ndarray]] = []
        self._v: List[List[np.ndarray]] = []

    def step(self, net: NetworkState, grads) -> None:
        for ps, gs in zip(net.params, grads):
            if len(ps) != len(gs):
                raise ValueError("gradient structure does not match parameters")
            for p, g in zip(ps, gs):
                if p.shape != g.shape:
                    raise ValueError(
                        f"gradient shape {g.shape} does not match parameter {p.shape}")
        self.t += 1
        if self.cfg.method == "sgd":
            for ps, gs in zip(net.params, grads):
                for p, g in zip(ps, gs):
                    p -= self.cfg.lr * g
            return
        if not self._m:
            self._m = [[np.zeros_like(p) for p in ps] for ps in net.params]
            self._v = [[np.zeros_like(p) for p in ps] for ps in net.params]
        b1, b2, eps = self.cfg.beta1, self.cfg.beta2, self.cfg.eps
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for ps, gs, ms, vs in zip(net.params, grads, self._m, self._v):
            for p, g, m, v in zip(ps, gs, ms, vs):
                m *= b1
                m += (1 - b1) * g
                v *= b2
                v += (1 - b2) * g * g
                p -= self.cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def optimizer_step(net: NetworkState, grads, cfg: OptimizerConfig,
                   step_index: int) -> NetworkState:
    """Single stateless update (Adam moments start at zero, t = step_index)."""
    opt = Optimizer(cfg)
    opt.t = step_index - 1
    opt.step(net, grads)
    return net
