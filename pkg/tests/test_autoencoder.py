import numpy as np
import pytest

from snnexplain.autoencoder import (AEModel, AutoencoderLossWeights,
                                    alignment_error, autoencoder_loss,
                                    batch_loss_and_grads, decode,
                                    embedding_reconstruction_error, encode,
                                    finetune_decoder, train_autoencoder)
from snnexplain.layers import LayerSpec
from snnexplain.network import build_network
from snnexplain.optim import OptimizerConfig


def dense_specs(m, d):
    enc = [LayerSpec("Dense", units=8), LayerSpec("ReLU"),
           LayerSpec("Dense", units=d)]
    dec = [LayerSpec("Dense", units=8), LayerSpec("ReLU"),
           LayerSpec("Dense", units=m), LayerSpec("Sigmoid")]
    return enc, dec


def toy_data(seed=0, n=30, m=5, d=2):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(n, m))
    h = rng.normal(size=(n, d))
    return x, h


def test_loss_zero_at_perfect_fit():
    x = np.array([0.1, 0.9])
    h = np.array([1.0, -1.0])
    w = AutoencoderLossWeights(gamma=1.0, mu_close=1.0, lambda_reg=0.0)
    assert autoencoder_loss(x, x.copy(), h, h.copy(), w, 0.0) == 0.0


def test_loss_example_values():
    w = AutoencoderLossWeights(gamma=1.0, mu_close=0.0, lambda_reg=0.0)
    v = autoencoder_loss(np.array([0.0, 0.0]), np.array([1.0, 1.0]),
                         np.array([0.0]), np.array([5.0]), w, 0.0)
    assert v == 2.0
    w2 = AutoencoderLossWeights(gamma=2.0, mu_close=3.0, lambda_reg=0.5)
    v2 = autoencoder_loss(np.array([0.0]), np.array([1.0]),
                          np.array([0.0]), np.array([1.0]), w2, 4.0)
    assert v2 == pytest.approx(2.0 + 3.0 + 2.0, abs=1e-12)


def test_loss_shape_validation():
    w = AutoencoderLossWeights()
    with pytest.raises(ValueError, match="reconstruction"):
        autoencoder_loss(np.zeros(2), np.zeros(3), np.zeros(1), np.zeros(1),
                         w, 0.0)
    with pytest.raises(ValueError, match="code"):
        autoencoder_loss(np.zeros(2), np.zeros(2), np.zeros(1), np.zeros(2),
                         w, 0.0)


def test_weights_validation():
    with pytest.raises(ValueError, match="nonnegative"):
        AutoencoderLossWeights(gamma=-1.0)
    with pytest.raises(ValueError, match="positive"):
        AutoencoderLossWeights(gamma=0.0, mu_close=0.0)


def test_batch_loss_matches_sum_of_per_example_losses():
    x, h = toy_data()
    enc_s, dec_s = dense_specs(x.shape[1], h.shape[1])
    ae = AEModel(build_network(enc_s, (x.shape[1],), 0),
                 build_network(dec_s, (h.shape[1],), 1))
    w = AutoencoderLossWeights(gamma=1.5, mu_close=0.5, lambda_reg=0.0)
    loss, _, _ = batch_loss_and_grads(ae, x, h, w)
    codes = encode(ae, x)
    recs = decode(ae, codes)
    manual = sum(autoencoder_loss(xi, ri, hi, ci, w, 0.0)
                 for xi, ri, hi, ci in zip(x, recs, h, codes))
    assert loss == pytest.approx(manual, rel=1e-12)


def test_training_reduces_loss_and_alignment():
    x, h = toy_data(seed=1)
    enc_s, dec_s = dense_specs(x.shape[1], h.shape[1])
    opt = OptimizerConfig(method="adam", lr=1e-2, seed=0)
    ae, hist = train_autoencoder(x, h, enc_s, dec_s,
                                 AutoencoderLossWeights(lambda_reg=0.0),
                                 opt, epochs=200)
    assert hist.epoch_loss[-1] < hist.epoch_loss[0]
    assert hist.align_final < hist.align_initial


def test_gamma_zero_trains_pure_code_regression():
    # Learnable linear targets: with gamma = 0 the alignment term is the
    # whole objective and must be driven down hard.
    rng = np.random.default_rng(2)
    x = rng.uniform(size=(30, 5))
    h = x @ rng.normal(size=(5, 2))
    enc_s, dec_s = dense_specs(x.shape[1], h.shape[1])
    opt = OptimizerConfig(method="adam", lr=1e-2, seed=0)
    ae, hist = train_autoencoder(
        x, h, enc_s, dec_s,
        AutoencoderLossWeights(gamma=0.0, mu_close=1.0, lambda_reg=0.0),
        opt, epochs=300)
    assert hist.align_final < 0.1 * hist.align_initial


def test_training_is_deterministic():
    x, h = toy_data(seed=3)
    enc_s, dec_s = dense_specs(x.shape[1], h.shape[1])
    opt = OptimizerConfig(method="adam", lr=1e-2, seed=0)
    runs = [train_autoencoder(x, h, enc_s, dec_s, AutoencoderLossWeights(),
                              opt, epochs=20)[0] for _ in range(2)]
    for p1, p2 in zip(runs[0].decoder.flat_params(),
                      runs[1].decoder.flat_params()):
        assert (p1 == p2).all()


def test_code_dim_mismatch_rejected_before_training():
    x, h = toy_data()
    enc_s, dec_s = dense_specs(x.shape[1], h.shape[1] + 1)  # encoder outputs 3
    with pytest.raises(ValueError, match="code length"):
        train_autoencoder(x, h, enc_s, dec_s, AutoencoderLossWeights(),
                          OptimizerConfig(), epochs=1)


def test_finetune_keeps_encoder_bit_exact_and_improves_decoder():
    x, h = toy_data(seed=4)
    enc_s, dec_s = dense_specs(x.shape[1], h.shape[1])
    opt = OptimizerConfig(method="adam", lr=1e-2, seed=0)
    ae, _ = train_autoencoder(x, h, enc_s, dec_s, AutoencoderLossWeights(),
                              opt, epochs=50)
    enc_before = [p.copy() for p in ae.encoder.flat_params()]
    before = embedding_reconstruction_error(ae, x, h)
    ae = finetune_decoder(ae, h, x, opt, epochs=50)
    after = embedding_reconstruction_error(ae, x, h)
    assert after < before
    for p0, p1 in zip(enc_before, ae.encoder.flat_params()):
        assert (p0 == p1).all()


def test_finetune_zero_epochs_is_noop():
    x, h = toy_data(seed=5)
    enc_s, dec_s = dense_specs(x.shape[1], h.shape[1])
    ae = AEModel(build_network(enc_s, (x.shape[1],), 0),
                 build_network(dec_s, (h.shape[1],), 1))
    before = [p.copy() for p in ae.decoder.flat_params()]
    ae = finetune_decoder(ae, h, x, OptimizerConfig(), epochs=0)
    for p0, p1 in zip(before, ae.decoder.flat_params()):
        assert (p0 == p1).all()


def test_finetune_rejects_wrong_embedding_length():
    x, h = toy_data()
    enc_s, dec_s = dense_specs(x.shape[1], h.shape[1])
    ae = AEModel(build_network(enc_s, (x.shape[1],), 0),
                 build_network(dec_s, (h.shape[1],), 1))
    with pytest.raises(ValueError, match="decoder input"):
        finetune_decoder(ae, np.zeros((3, 5)), x[:3], OptimizerConfig(), 1)


def test_alignment_error_identity_encoder():
    enc = build_network([LayerSpec("Dense", units=2)], (2,), 0)
    enc.params[0][0][:] = np.eye(2)
    enc.params[0][1][:] = 0.0
    dec = build_network([LayerSpec("Dense", units=2)], (2,), 1)
    ae = AEModel(enc, dec)
    x = np.array([[0.0, 0.0], [1.0, 1.0]])
    h = np.array([[0.0, 0.0], [0.0, 0.0]])
    assert alignment_error(ae, x, h) == pytest.approx(2.0, abs=1e-12)
