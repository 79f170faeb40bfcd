"""Embedding-aligned autoencoder: reconstruction loss plus a code-alignment
term that ties the bottleneck to the Siamese embeddings, and decoder-only
fine-tuning against those embeddings."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .layers import LayerSpec
from .network import (NetworkState, add_grads, backward, build_network,
                      forward, l2_regularizer)
from .optim import Optimizer, OptimizerConfig
from .siamese import TrainingError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AutoencoderLossWeights:
    gamma: float = 1.0
    mu_close: float = 1.0
    lambda_reg: float = 1e-4

    def __post_init__(self):
        if min(self.gamma, self.mu_close, self.lambda_reg) < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.gamma + self.mu_close <= 0:
            raise ValueError("at least one of gamma, mu_close must be positive")


@dataclass
class AEModel:
    encoder: NetworkState
    decoder: NetworkState

    @property
    def code_dim(self) -> int:
        return self.encoder.output_shape[0]


@dataclass
class AETrainingHistory:
    epoch_loss: List[float] = field(default_factory=list)
    align_initial: float = 0.0
    align_final: float = 0.0
    converged: bool = True


def autoencoder_loss(x: np.ndarray, x_rec: np.ndarray, h_snn: np.ndarray,
                     h_code: np.ndarray, w: AutoencoderLossWeights,
                     reg_value: float) -> float:
    """Per-example loss gamma*||x-x_rec||^2 + mu_close*||h_snn-h_code||^2
    + lambda_reg*reg_value."""
    x, x_rec = np.asarray(x, float), np.asarray(x_rec, float)
    h_snn, h_code = np.asarray(h_snn, float), np.asarray(h_code, float)
    if x.shape != x_rec.shape:
        raise ValueError(f"input/reconstruction shapes differ: {x.shape} vs {x_rec.shape}")
    if h_snn.shape != h_code.shape:
        raise ValueError(f"embedding/code shapes differ: {h_snn.shape} vs {h_code.shape}")
    return (w.gamma * float(np.sum((x - x_rec) ** 2))
            + w.mu_close * float(np.sum((h_snn - h_code) ** 2))
            + w.lambda_reg * reg_value)


def _reg(ae: AEModel) -> float:
    return l2_regularizer(ae.encoder)[0] + l2_regularizer(ae.decoder)[0]


def batch_loss_and_grads(ae: AEModel, x: np.ndarray, h_snn: np.ndarray,
                         w: AutoencoderLossWeights, reg_scale: float = 1.0):
    """Summed loss over a batch plus gradients for encoder and decoder."""
    acts_e = forward(ae.encoder, x)
    code = acts_e[-1]
    acts_d = forward(ae.decoder, code)
    x_rec = acts_d[-1]
    loss = (w.gamma * float(np.sum((x - x_rec) ** 2))
            + w.mu_close * float(np.sum((h_snn - code) ** 2)))
    dec_grads, d_code = backward(ae.decoder, acts_d,
                                 2.0 * w.gamma * (x_rec - x))
    d_code = d_code + 2.0 * w.mu_close * (code - h_snn)
    enc_grads, _ = backward(ae.encoder, acts_e, d_code)
    if w.lambda_reg > 0 and reg_scale > 0:
        for net, grads in ((ae.encoder, enc_grads), (ae.decoder, dec_grads)):
            rv, rg = l2_regularizer(net)
            loss += reg_scale * w.lambda_reg * rv
            add_grads(grads, rg, reg_scale * w.lambda_reg)
    return loss, enc_grads, dec_grads


def alignment_error(ae: AEModel, inputs: np.ndarray,
                    snn_embeddings: np.ndarray) -> float:
    """Sum over examples of ||h_i - code_i||^2."""
    code = forward(ae.encoder, inputs)[-1]
    return float(np.sum((snn_embeddings - code) ** 2))


def embedding_reconstruction_error(ae: AEModel, inputs: np.ndarray,
                                   snn_embeddings: np.ndarray) -> float:
    """Sum over examples of ||x_i - psi(h_i)||^2 (decoder fed SNN embeddings)."""
    x_rec = forward(ae.decoder, snn_embeddings)[-1]
    return float(np.sum((inputs - x_rec) ** 2))


def train_autoencoder(inputs: np.ndarray, snn_embeddings: np.ndarray,
                      spec_enc: Sequence[LayerSpec], spec_dec: Sequence[LayerSpec],
                      w: AutoencoderLossWeights, opt: OptimizerConfig,
                      epochs: int, batch_size: int = 64,
                      init_seed: int = 0) -> Tuple[AEModel, AETrainingHistory]:
    """Joint encoder/decoder training with the alignment term."""
    inputs = np.asarray(inputs, dtype=np.float64)
    snn_embeddings = np.asarray(snn_embeddings, dtype=np.float64)
    d = snn_embeddings.shape[1]
    encoder = build_network(spec_enc, inputs.shape[1:], init_seed)
    decoder = build_network(spec_dec, (d,), init_seed + 1)
    if encoder.output_shape != (d,):
        raise ValueError(f"encoder code length {encoder.output_shape} does not "
                         f"match embedding length {d}")
    if decoder.output_shape != inputs.shape[1:]:
        raise ValueError(f"decoder output shape {decoder.output_shape} does not "
                         f"match input shape {inputs.shape[1:]}")
    ae = AEModel(encoder, decoder)
    history = AETrainingHistory()
    history.align_initial = alignment_error(ae, inputs, snn_embeddings)
    enc_opt, dec_opt = Optimizer(opt), Optimizer(opt)
    rng = np.random.default_rng(opt.seed)
    n = len(inputs)
    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            sel = order[start:start + batch_size]
            loss, eg, dg = batch_loss_and_grads(ae, inputs[sel],
                                                snn_embeddings[sel], w,
                                                reg_scale=len(sel) / n)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite autoencoder loss at epoch {epoch}")
            enc_opt.step(encoder, eg)
            dec_opt.step(decoder, dg)
            epoch_loss += loss
        history.epoch_loss.append(epoch_loss)
    history.align_final = alignment_error(ae, inputs, snn_embeddings)
    if history.align_initial > 0 and \
            history.align_final > 0.2 * history.align_initial:
        history.converged = False
        log.warning("alignment term only reached %.3g of its initial %.3g",
                    history.align_final, history.align_initial)
    return ae, history


def finetune_decoder(ae: AEModel, snn_embeddings: np.ndarray,
                     inputs: np.ndarray, opt: OptimizerConfig, epochs: int,
                     batch_size: int = 64) -> AEModel:
    """Refine only the decoder against sum ||x_i - psi(h_i)||^2.

    The encoder is left untouched (bit-exact)."""
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    inputs = np.asarray(inputs, dtype=np.float64)
    snn_embeddings = np.asarray(snn_embeddings, dtype=np.float64)
    if snn_embeddings.shape[1:] != ae.decoder.input_shape:
        raise ValueError(f"embedding length {snn_embeddings.shape[1:]} does not "
                         f"match decoder input {ae.decoder.input_shape}")
    optimizer = Optimizer(opt)
    rng = np.random.default_rng(opt.seed)
    n = len(inputs)
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            sel = order[start:start + batch_size]
            acts = forward(ae.decoder, snn_embeddings[sel])
            x_rec = acts[-1]
            loss = float(np.sum((inputs[sel] - x_rec) ** 2))
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite fine-tuning loss at epoch {epoch}")
            grads, _ = backward(ae.decoder, acts, 2.0 * (x_rec - inputs[sel]))
            optimizer.step(ae.decoder, grads)
    return ae


def encode(ae: AEModel, x: np.ndarray) -> np.ndarray:
    return forward(ae.encoder, x)[-1]


def decode(ae: AEModel, h: np.ndarray) -> np.ndarray:
    """psi(h): reconstruct an input-space vector from an embedding."""
    return forward(ae.decoder, h)[-1]
