import numpy as np
import pytest

from snnexplain.autoencoder import AEModel
from snnexplain.explain import (ExplanationResult, PerturbationConfig,
                                PrototypeSet, compute_prototypes, explain,
                                mean_feature_change, nearest_prototype,
                                perturbation_sigma, sample_perturbations,
                                select_important_features, top_q_mask)
from snnexplain.layers import LayerSpec
from snnexplain.network import build_network
from snnexplain.siamese import SNNModel


def identity_net(n):
    net = build_network([LayerSpec("Dense", units=n)], (n,), 0)
    net.params[0][0][:] = np.eye(n)
    net.params[0][1][:] = 0.0
    return net


def linear_ae(d, m, seed=0):
    enc = build_network([LayerSpec("Dense", units=d)], (m,), seed)
    dec = build_network([LayerSpec("Dense", units=m)], (d,), seed + 1)
    return AEModel(enc, dec)


def test_prototypes_are_class_means():
    h = np.array([[0.0, 0.0], [2.0, 2.0], [10.0, 0.0]])
    protos = compute_prototypes(h, np.array([0, 0, 1]))
    np.testing.assert_array_equal(protos.classes, [0, 1])
    np.testing.assert_array_equal(protos.prototypes[0], [1.0, 1.0])
    np.testing.assert_array_equal(protos.prototypes[1], [10.0, 0.0])
    np.testing.assert_array_equal(protos.counts, [2, 1])


def test_prototypes_permutation_invariant():
    rng = np.random.default_rng(0)
    h = rng.normal(size=(20, 3))
    y = np.arange(20) % 4
    perm = rng.permutation(20)
    a = compute_prototypes(h, y)
    b = compute_prototypes(h[perm], y[perm])
    np.testing.assert_allclose(a.prototypes, b.prototypes, atol=1e-12)


def test_prototypes_reject_empty():
    with pytest.raises(ValueError, match="no embeddings"):
        compute_prototypes(np.zeros((0, 2)), np.zeros(0, dtype=int))


def test_nearest_prototype_basic_and_tie():
    protos = PrototypeSet(np.array([0, 1]),
                          np.array([[0.0, 0.0], [4.0, 0.0]]),
                          np.array([1, 1]))
    assert nearest_prototype(np.array([1.0, 0.0]), protos) == 0
    assert nearest_prototype(np.array([3.0, 0.0]), protos) == 1
    # Equidistant point: tie goes to the smaller class id.
    assert nearest_prototype(np.array([2.0, 0.0]), protos) == 0


def test_nearest_prototype_rejects_empty_set():
    empty = PrototypeSet(np.array([], dtype=int), np.zeros((0, 2)),
                         np.array([], dtype=int))
    with pytest.raises(ValueError, match="empty"):
        nearest_prototype(np.zeros(2), empty)


def test_select_important_features_values():
    h = np.array([1.0, 5.0, 2.0, 0.5])
    c = np.array([1.1, 0.0, 2.0, 3.0])  # gaps 0.1, 5.0, 0.0, 2.5
    np.testing.assert_array_equal(select_important_features(h, c, 2), [0, 2])
    np.testing.assert_array_equal(select_important_features(h, c, 4),
                                  [0, 1, 2, 3])


def test_select_important_features_tie_and_shift_invariance():
    h = np.array([1.0, 1.0, 1.0])
    c = np.array([2.0, 2.0, 0.0])  # gaps 1, 1, 1: stable tie -> lowest indices
    np.testing.assert_array_equal(select_important_features(h, c, 2), [0, 1])
    rng = np.random.default_rng(1)
    hr, cr = rng.normal(size=(2, 6))
    shift = 3.7
    np.testing.assert_array_equal(
        select_important_features(hr, cr, 3),
        select_important_features(hr + shift, cr + shift, 3))


def test_select_important_features_rejects_bad_s():
    h = np.zeros(3)
    with pytest.raises(ValueError, match="out of range"):
        select_important_features(h, h, 0)
    with pytest.raises(ValueError, match="out of range"):
        select_important_features(h, h, 4)


def test_perturbation_sigma_rule():
    h = np.array([1.0, 2.0])
    c = np.array([1.5, 0.0])  # min gap 0.5
    assert perturbation_sigma(h, c, 0.1, 1e-6) == pytest.approx(0.05)
    # Coincident coordinate: the floor keeps sigma positive.
    assert perturbation_sigma(h, h, 0.1, 1e-6) == 1e-6


def test_sampler_support_signs_and_determinism():
    h = np.array([0.0, 0.0, 0.0, 0.0])
    c = np.array([1.0, -1.0, 0.0, 2.0])
    imp = np.array([0, 1, 2])
    d1 = sample_perturbations(imp, 0.5, h, c, 200, seed=3)
    d2 = sample_perturbations(imp, 0.5, h, c, 200, seed=3)
    assert d1.shape == (200, 4)
    assert (d1 == d2).all()
    assert (d1[:, 3] == 0.0).all()          # off-support coordinate untouched
    assert (d1[:, 0] >= 0.0).all()          # toward a larger prototype value
    assert (d1[:, 1] <= 0.0).all()          # toward a smaller one
    assert (d1[:, 2] >= 0.0).all()          # equality defaults to +1


def test_sampler_half_normal_mean():
    h = np.zeros(2)
    c = np.ones(2)
    sigma = 0.3
    d = sample_perturbations(np.array([0]), sigma, h, c, 200000, seed=0)
    expected = sigma * np.sqrt(2.0 / np.pi)
    assert abs(d[:, 0].mean() - expected) / expected < 0.02


def test_sampler_rejects_bad_args():
    h = np.zeros(2)
    with pytest.raises(ValueError, match="empty"):
        sample_perturbations(np.array([], dtype=int), 0.1, h, h, 10, 0)
    with pytest.raises(ValueError, match="sigma"):
        sample_perturbations(np.array([0]), 0.0, h, h, 10, 0)
    with pytest.raises(ValueError, match="n_samples"):
        sample_perturbations(np.array([0]), 0.1, h, h, 0, 0)


def test_mean_feature_change_zero_deltas():
    ae = linear_ae(2, 3)
    out = mean_feature_change(ae, np.zeros(2), np.zeros((10, 2)))
    np.testing.assert_array_equal(out, np.zeros(3))


def test_mean_feature_change_identity_decoder():
    # With an identity decoder, the change equals the perturbation itself.
    ae = AEModel(identity_net(3), identity_net(3))
    deltas = np.array([[0.5, 0.0, -0.25], [1.5, 0.0, 0.25]])
    out = mean_feature_change(ae, np.zeros(3), deltas)
    np.testing.assert_allclose(out, [1.0, 0.0, 0.25], atol=1e-12)


def test_mean_feature_change_linear_decoder_oracle():
    # For a bias-only-shifted linear decoder psi(h) = hW + b, the change is
    # |delta W| exactly; compare against a direct computation.
    ae = linear_ae(3, 5, seed=2)
    w = ae.decoder.params[0][0]
    rng = np.random.default_rng(4)
    h = rng.normal(size=3)
    deltas = rng.normal(size=(50, 3))
    expected = np.mean(np.abs(deltas @ w), axis=0)
    out = mean_feature_change(ae, h, deltas, batch_size=7)
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_mean_feature_change_batch_size_invariant():
    ae = linear_ae(2, 4, seed=5)
    rng = np.random.default_rng(6)
    h = rng.normal(size=2)
    deltas = rng.normal(size=(33, 2))
    a = mean_feature_change(ae, h, deltas, batch_size=4)
    b = mean_feature_change(ae, h, deltas, batch_size=1000)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_top_q_mask_values_and_ties():
    mc = np.array([0.1, 0.5, 0.3, 0.5])
    np.testing.assert_array_equal(top_q_mask(mc, 2), [0, 1, 0, 1])
    # Stable tie: the earlier of the two 0.5s wins when only one slot is left.
    np.testing.assert_array_equal(top_q_mask(mc, 1), [0, 1, 0, 0])
    np.testing.assert_array_equal(top_q_mask(mc, 4), [1, 1, 1, 1])


def test_top_q_mask_rejects_bad_q():
    with pytest.raises(ValueError, match="out of range"):
        top_q_mask(np.zeros(3), 0)
    with pytest.raises(ValueError, match="out of range"):
        top_q_mask(np.zeros(3), 4)


def test_explain_hand_traced_identity_pipeline():
    # Identity embedder and decoder in R^2: everything is checkable by hand.
    snn = SNNModel(identity_net(2))
    ae = AEModel(identity_net(2), identity_net(2))
    protos = PrototypeSet(np.array([0, 1]),
                          np.array([[0.0, 0.0], [10.0, 10.0]]),
                          np.array([5, 5]))
    x = np.array([1.0, 2.0])  # nearest prototype is class 0
    cfg = PerturbationConfig(s=1, q=1, n_samples=2000, seed=0)
    res = explain(x, snn, ae, protos, cfg)
    assert isinstance(res, ExplanationResult)
    assert res.target_class == 0
    # Gaps to c_0 are (1, 2): coordinate 0 is the important one.
    np.testing.assert_array_equal(res.important, [0])
    assert res.sigma == pytest.approx(0.1)
    assert res.mean_change[0] > 0 and res.mean_change[1] == 0.0
    np.testing.assert_array_equal(res.mask, [1.0, 0.0])
    # Mean |change| of the identity decoder is the half-normal mean.
    expected = res.sigma * np.sqrt(2.0 / np.pi)
    assert res.mean_change[0] == pytest.approx(expected, rel=0.1)


def test_explain_is_deterministic():
    snn = SNNModel(identity_net(3))
    ae = linear_ae(3, 3, seed=7)
    ae.encoder = identity_net(3)
    h = np.random.default_rng(8).normal(size=(12, 3))
    protos = compute_prototypes(h, np.arange(12) % 2)
    cfg = PerturbationConfig(s=2, q=2, n_samples=500, seed=1)
    x = np.array([0.2, -0.1, 0.4])
    a = explain(x, snn, ae, protos, cfg)
    b = explain(x, snn, ae, protos, cfg)
    assert (a.mean_change == b.mean_change).all()
    assert (a.mask == b.mask).all()
    assert a.sigma == b.sigma


def test_config_validation():
    for kwargs in ({"s": 0, "q": 1}, {"s": 1, "q": 0},
                   {"s": 1, "q": 1, "n_samples": 0},
                   {"s": 1, "q": 1, "sigma_factor": 0.0},
                   {"s": 1, "q": 1, "sigma_floor": 0.0}):
        with pytest.raises(ValueError):
            PerturbationConfig(**kwargs)
