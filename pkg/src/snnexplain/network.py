"""Sequential networks: state, forward/backward over the layer stack,
L2 regularization and a finite-difference gradient checker."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np

from .layers import LayerSpec, ShapeError, backward as layer_backward
from .layers import forward as layer_forward
from .layers import init_params, output_shape


@dataclass
class NetworkState:
    """Ordered layer specs plus their parameters.

    `params[i]` is a (possibly empty) list of float64 arrays for layer i.
    `shapes[i]` is the unbatched input shape of layer i; `shapes[-1]` is the
    output shape.
    """

    specs: List[LayerSpec]
    params: List[List[np.ndarray]]
    shapes: List[Tuple[int, ...]]

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return self.shapes[0]

    @property
    def output_shape(self) -> Tuple[int, ...]:
        return self.shapes[-1]

    def copy(self) -> "NetworkState":
        return NetworkState(list(self.specs),
                            [[p.copy() for p in ps] for ps in self.params],
                            list(self.shapes))

    def flat_params(self) -> List[np.ndarray]:
        return [p for ps in self.params for p in ps]


def build_network(specs: Sequence[LayerSpec], input_shape: Tuple[int, ...],
                  seed: int) -> NetworkState:
    """Instantiate a network with seeded He-style initialization."""
    rng = np.random.default_rng(seed)
    shapes = [tuple(input_shape)]
    params = []
    for i, spec in enumerate(specs):
        try:
            shapes.append(output_shape(spec, shapes[-1]))
        except ShapeError as e:
            raise ShapeError(f"layer {i} ({spec.kind}): {e}") from None
        params.append(init_params(spec, shapes[-2], rng))
    return NetworkState(list(specs), params, shapes)


def _as_batch(x: np.ndarray, shape: Tuple[int, ...], what: str):
    x = np.asarray(x, dtype=np.float64)
    if x.shape == shape:
        return x[None], True
    if x.shape[1:] == shape:
        return x, False
    raise ShapeError(f"{what} shape {x.shape} does not match expected {shape} "
                     f"(optionally with a leading batch axis)")


def forward(net: NetworkState, x: np.ndarray) -> List[np.ndarray]:
    """Run the network, returning all activations.

    The result has length len(specs) + 1; entry 0 is the input and the last
    entry is the network output. Accepts a single example shaped like
    `net.input_shape` or a batch with a leading axis.
    """
    xb, single = _as_batch(x, net.input_shape, "input")
    acts = [xb]
    for i, (spec, ps) in enumerate(zip(net.specs, net.params)):
        try:
            acts.append(layer_forward(spec, ps, acts[-1]))
        except ValueError as e:
            raise ShapeError(f"layer {i} ({spec.kind}): {e}") from None
    if single:
        acts = [a[0] for a in acts]
    return acts


def backward(net: NetworkState, activations: Sequence[np.ndarray],
             grad_output: np.ndarray):
    """Backpropagate `grad_output` through the network.

    Returns (param_grads, grad_input) where param_grads mirrors the
    structure of `net.params`.
    """
    if len(activations) != len(net.specs) + 1:
        raise ShapeError(
            f"expected {len(net.specs) + 1} activations, got {len(activations)}")
    g, single = _as_batch(grad_output, net.output_shape, "grad_output")
    acts = [a[None] if single else np.asarray(a, dtype=np.float64)
            for a in activations]
    param_grads: List[List[np.ndarray]] = [[] for _ in net.specs]
    for i in range(len(net.specs) - 1, -1, -1):
        if acts[i + 1].shape != g.shape:
            raise ShapeError(f"layer {i} ({net.specs[i].kind}): gradient shape "
                             f"{g.shape} does not match activation {acts[i + 1].shape}")
        param_grads[i], g = layer_backward(net.specs[i], net.params[i], acts[i], g)
    if single:
        g = g[0]
    return param_grads, g


def l2_regularizer(net: NetworkState):
    """Sum of squared weights (biases excluded) and its gradients."""
    value = 0.0
    grads: List[List[np.ndarray]] = []
    for spec, ps in zip(net.specs, net.params):
        if spec.kind in ("Dense", "Conv2D"):
            w, b = ps
            value += float(np.sum(w * w))
            grads.append([2.0 * w, np.zeros_like(b)])
        else:
            grads.append([])
    return value, grads


def zero_grads(net: NetworkState) -> List[List[np.ndarray]]:
    return [[np.zeros_like(p) for p in ps] for ps in net.params]


def add_grads(acc: List[List[np.ndarray]], extra, scale: float = 1.0) -> None:
    for a, e in zip(acc, extra):
        for pa, pe in zip(a, e):
            pa += scale * pe


def grad_check(net: NetworkState, loss_fn: Callable[[np.ndarray], float],
               x: np.ndarray, step: float) -> float:
    """Max relative error between analytic and central-difference gradients.

    `loss_fn` maps the network output to a scalar; its gradient with respect
    to the output is obtained by central differences as well, so the analytic
    path only trusts `backward`.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    acts = forward(net, x)
    out = acts[-1]
    base = float(loss_fn(out))
    if not np.isfinite(base):
        raise ValueError("loss is not finite at the evaluation point")

    gout = np.zeros_like(out)
    flat = gout.reshape(-1)
    oflat = out.reshape(-1)
    for i in range(flat.size):
        orig = oflat[i]
        oflat[i] = orig + step
        lp = float(loss_fn(out))
        oflat[i] = orig - step
        lm = float(loss_fn(out))
        oflat[i] = orig
        flat[i] = (lp - lm) / (2 * step)
    analytic, _ = backward(net, acts, gout)

    return max_rel_err_vs_fd(net, lambda: float(loss_fn(forward(net, x)[-1])),
                             analytic, step)


def max_rel_err_vs_fd(net: NetworkState, objective: Callable[[], float],
                      analytic, step: float, atol: float = 0.0) -> float:
    """Compare analytic parameter gradients against central differences of an
    arbitrary scalar objective of the network parameters.

    Entries where both sides are below `atol` count as matching; central
    differences carry roundoff noise around loss*eps/step, which otherwise
    dominates gradients that are exactly zero."""
    if step <= 0:
        raise ValueError("step must be positive")
    max_err = 0.0
    for ps, gs in zip(net.params, analytic):
        for p, g in zip(ps, gs):
            pf, gf = p.reshape(-1), g.reshape(-1)
            for i in range(pf.size):
                orig = pf[i]
                pf[i] = orig + step
                lp = objective()
                pf[i] = orig - step
                lm = objective()
                pf[i] = orig
                numeric = (lp - lm) / (2 * step)
                if max(abs(gf[i]), abs(numeric)) <= atol:
                    continue
                denom = max(abs(gf[i]), abs(numeric), 1e-12)
                max_err = max(max_err, abs(gf[i] - numeric) / denom)
    return max_err
