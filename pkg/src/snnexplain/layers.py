"""Layer definitions: shape inference, parameter init, forward and backward.

All arrays are float64 and carry a leading batch axis internally. Image
tensors are channels-last (H, W, C). Convolutions are stride 1; pooling
uses ceil-mode windows so 7x7 pools to 4x4.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Optional, Tuple

import numpy as np

KINDS = ("Dense", "Conv2D", "MaxPool2D", "UpSample2D", "Flatten", "Reshape",
         "ReLU", "Sigmoid")


class ShapeError(ValueError):
    """Raised when an input or gradient shape does not match a layer."""


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a sequential network.

    Only the hyperparameters relevant to ``kind`` are used:
    Dense -> units; Conv2D -> filters, kernel, padding; MaxPool2D -> pool;
    UpSample2D -> factor; Reshape -> target_shape.
    """

    kind: str
    units: Optional[int] = None
    filters: Optional[int] = None
    kernel: Tuple[int, int] = (3, 3)
    padding: str = "same"
    pool: int = 2
    factor: int = 2
    target_shape: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "Dense" and (self.units is None or self.units < 1):
            raise ValueError("Dense layer needs units >= 1")
        if self.kind == "Conv2D":
            if self.filters is None or self.filters < 1:
                raise ValueError("Conv2D layer needs filters >= 1")
            if self.padding not in ("same", "valid"):
                raise ValueError(f"unknown padding {self.padding!r}")
        if self.kind == "Reshape" and self.target_shape is None:
            raise ValueError("Reshape layer needs target_shape")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernel"] = list(d["kernel"])
        if d["target_shape"] is not None:
            d["target_shape"] = list(d["target_shape"])
        return d

    @staticmethod
    def from_dict(d: dict) -> "LayerSpec":
        d = dict(d)
        d["kernel"] = tuple(d.get("kernel", (3, 3)))
        if d.get("target_shape") is not None:
            d["target_shape"] = tuple(d["target_shape"])
        return LayerSpec(**d)


def output_shape(spec: LayerSpec, in_shape: Tuple[int, ...]) -> Tuple[int, ...]:
    """Shape produced by `spec` on a single (unbatched) input of `in_shape`."""
    k = spec.kind
    if k == "Dense":
        if len(in_shape) != 1:
            raise ShapeError(f"Dense expects a flat input, got {in_shape}")
        return (spec.units,)
    if k in ("ReLU", "Sigmoid"):
        return in_shape
    if k == "Flatten":
        return (int(np.prod(in_shape)),)
    if k == "Reshape":
        if int(np.prod(in_shape)) != int(np.prod(spec.target_shape)):
            raise ShapeError(
                f"Reshape {in_shape} -> {spec.target_shape} changes size")
        return tuple(spec.target_shape)
    if len(in_shape) != 3:
        raise ShapeError(f"{k} expects an (H, W, C) input, got {in_shape}")
    h, w, c = in_shape
    if k == "Conv2D":
        kh, kw = spec.kernel
        if spec.padding == "same":
            return (h, w, spec.filters)
        if h < kh or w < kw:
            raise ShapeError(f"Conv2D kernel {spec.kernel} larger than input {in_shape}")
        return (h - kh + 1, w - kw + 1, spec.filters)
    if k == "MaxPool2D":
        p = spec.pool
        return (-(-h // p), -(-w // p), c)
    if k == "UpSample2D":
        f = spec.factor
        return (h * f, w * f, c)
    raise AssertionError(k)


def init_params(spec: LayerSpec, in_shape: Tuple[int, ...],
                rng: np.random.Generator) -> list:
    """He-style uniform fan-in init for weights, zeros for biases."""
    if spec.kind == "Dense":
        fan_in = in_shape[0]
        limit = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-limit, limit, size=(fan_in, spec.units))
        return [w, np.zeros(spec.units)]
    if spec.kind == "Conv2D":
        kh, kw = spec.kernel
        c_in = in_shape[2]
        fan_in = kh * kw * c_in
        limit = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-limit, limit, size=(kh, kw, c_in, spec.filters))
        return [w, np.zeros(spec.filters)]
    return []


def _conv_pad(spec: LayerSpec, in_shape):
    kh, kw = spec.kernel
    if spec.padding == "same":
        return (kh - 1) // 2, kh // 2, (kw - 1) // 2, kw // 2
    return 0, 0, 0, 0


def forward(spec: LayerSpec, params: list, x: np.ndarray) -> np.ndarray:
    """Forward pass on a batched input (N, ...)."""
    k = spec.kind
    if k == "Dense":
        w, b = params
        return x @ w + b
    if k == "ReLU":
        return np.maximum(x, 0.0)
    if k == "Sigmoid":
        return 1.0 / (1.0 + np.exp(-x))
    if k == "Flatten":
        return x.reshape(x.shape[0], -1)
    if k == "Reshape":
        return x.reshape((x.shape[0],) + tuple(spec.target_shape))
    if k == "Conv2D":
        w, b = params
        kh, kw = spec.kernel
        pt, pb, pl, pr = _conv_pad(spec, x.shape[1:])
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
        ho = xp.shape[1] - kh + 1
        wo = xp.shape[2] - kw + 1
        out = np.tile(b, (x.shape[0], ho, wo, 1))
        for i in range(kh):
            for j in range(kw):
                out += xp[:, i:i + ho, j:j + wo, :] @ w[i, j]
        return out
    if k == "MaxPool2D":
        return _pool_windows(x, spec.pool)[1]
    if k == "UpSample2D":
        f = spec.factor
        return x.repeat(f, axis=1).repeat(f, axis=2)
    raise AssertionError(k)


def _pool_windows(x, p):
    """Ceil-mode 2D max pooling; returns (windows, out, argmax)."""
    n, h, w, c = x.shape
    ho, wo = -(-h // p), -(-w // p)
    xp = np.pad(x, ((0, 0), (0, ho * p - h), (0, wo * p - w), (0, 0)),
                constant_values=-np.inf)
    win = (xp.reshape(n, ho, p, wo, p, c)
             .transpose(0, 1, 3, 5, 2, 4)
             .reshape(n, ho, wo, c, p * p))
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return win, out, idx


def backward(spec: LayerSpec, params: list, x: np.ndarray,
             dout: np.ndarray):
    """Backward pass; returns (param_grads, dx) for a batched input."""
    k = spec.kind
    if k == "Dense":
        w, _ = params
        return [x.T @ dout, dout.sum(axis=0)], dout @ w.T
    if k == "ReLU":
        return [], dout * (x > 0)
    if k == "Sigmoid":
        s = 1.0 / (1.0 + np.exp(-x))
        return [], dout * s * (1.0 - s)
    if k == "Flatten":
        return [], dout.reshape(x.shape)
    if k == "Reshape":
        return [], dout.reshape(x.shape)
    if k == "Conv2D":
        w, _ = params
        kh, kw = spec.kernel
        pt, pb, pl, pr = _conv_pad(spec, x.shape[1:])
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
        ho, wo = dout.shape[1], dout.shape[2]
        dw = np.empty_like(w)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                patch = xp[:, i:i + ho, j:j + wo, :]
                dw[i, j] = np.tensordot(patch, dout, axes=([0, 1, 2], [0, 1, 2]))
                dxp[:, i:i + ho, j:j + wo, :] += dout @ w[i, j].T
        db = dout.sum(axis=(0, 1, 2))
        h, w_ = x.shape[1], x.shape[2]
        return [dw, db], dxp[:, pt:pt + h, pl:pl + w_, :]
    if k == "MaxPool2D":
        p = spec.pool
        n, h, w, c = x.shape
        win, _, idx = _pool_windows(x, p)
        dwin = np.zeros_like(win)
        np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
        ho, wo = idx.shape[1], idx.shape[2]
        dxp = (dwin.reshape(n, ho, wo, c, p, p)
                   .transpose(0, 1, 4, 2, 5, 3)
                   .reshape(n, ho * p, wo * p, c))
        return [], dxp[:, :h, :w, :]
    if k == "UpSample2D":
        f = spec.factor
        n, h, w, c = x.shape
        return [], dout.reshape(n, h, f, w, f, c).sum(axis=(2, 4))
    raise AssertionError(k)
