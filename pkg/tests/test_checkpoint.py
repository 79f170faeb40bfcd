import numpy as np
import pytest

from snnexplain.autoencoder import AEModel, decode
from snnexplain.checkpoint import (CorruptCheckpointError, RoleMismatchError,
                                   VersionMismatchError, checkpoint_config,
                                   load_checkpoint, load_prototypes,
                                   save_checkpoint, save_prototypes)
from snnexplain.explain import PrototypeSet
from snnexplain.layers import LayerSpec
from snnexplain.network import build_network, forward
from snnexplain.siamese import SNNModel, embed


def snn_model(seed=0):
    return SNNModel(build_network(
        [LayerSpec("Dense", units=6), LayerSpec("ReLU"),
         LayerSpec("Dense", units=2)], (4,), seed))


def ae_model(seed=0):
    enc = build_network([LayerSpec("Dense", units=2)], (4,), seed)
    dec = build_network([LayerSpec("Dense", units=4), LayerSpec("Sigmoid")],
                        (2,), seed + 1)
    return AEModel(enc, dec)


def test_snn_round_trip_bit_exact(tmp_path):
    model = snn_model()
    path = str(tmp_path / "snn.ckpt")
    save_checkpoint(model, path, config={"tau": 1.0}, seed=7)
    loaded = load_checkpoint(path, expect_role="snn")
    for p0, p1 in zip(model.subnet.flat_params(), loaded.subnet.flat_params()):
        assert (p0 == p1).all()
    x = np.random.default_rng(0).uniform(size=(3, 4))
    np.testing.assert_array_equal(embed(model, x), embed(loaded, x))
    assert checkpoint_config(path) == {"tau": 1.0}


def test_double_round_trip_identical_bytes(tmp_path):
    model = snn_model(3)
    p1, p2 = str(tmp_path / "a.ckpt"), str(tmp_path / "b.ckpt")
    save_checkpoint(model, p1, seed=1)
    save_checkpoint(load_checkpoint(p1), p2, seed=1)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_ae_round_trip(tmp_path):
    model = ae_model()
    path = str(tmp_path / "ae.ckpt")
    save_checkpoint(model, path)
    loaded = load_checkpoint(path, expect_role="autoencoder")
    h = np.random.default_rng(1).normal(size=(3, 2))
    np.testing.assert_array_equal(decode(model, h), decode(loaded, h))


def test_role_mismatch(tmp_path):
    path = str(tmp_path / "snn.ckpt")
    save_checkpoint(snn_model(), path)
    with pytest.raises(RoleMismatchError, match="expected 'autoencoder'"):
        load_checkpoint(path, expect_role="autoencoder")


def test_version_mismatch(tmp_path):
    path = str(tmp_path / "snn.ckpt")
    save_checkpoint(snn_model(), path)
    blob = bytearray(open(path, "rb").read())
    blob[4] = 99
    open(path, "wb").write(bytes(blob))
    with pytest.raises(VersionMismatchError, match="version 99"):
        load_checkpoint(path)


def test_truncated_and_garbage_files(tmp_path):
    path = str(tmp_path / "snn.ckpt")
    save_checkpoint(snn_model(), path)
    blob = open(path, "rb").read()
    bad = str(tmp_path / "bad.ckpt")
    open(bad, "wb").write(blob[:-10])
    with pytest.raises(CorruptCheckpointError, match="truncated"):
        load_checkpoint(bad)
    open(bad, "wb").write(blob + b"\x00" * 8)
    with pytest.raises(CorruptCheckpointError, match="trailing"):
        load_checkpoint(bad)
    open(bad, "wb").write(b"not a checkpoint at all")
    with pytest.raises(CorruptCheckpointError, match="not a checkpoint"):
        load_checkpoint(bad)


def test_forward_identical_after_reload(tmp_path):
    model = snn_model(9)
    path = str(tmp_path / "snn.ckpt")
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    x = np.random.default_rng(2).uniform(size=4)
    np.testing.assert_array_equal(forward(model.subnet, x)[-1],
                                  forward(loaded.subnet, x)[-1])


def test_prototypes_round_trip(tmp_path):
    protos = PrototypeSet(np.array([0, 2]),
                          np.array([[0.125, -1.5], [3.0, 0.0]]),
                          np.array([10, 4]))
    path = str(tmp_path / "protos.json")
    save_prototypes(protos, path)
    loaded = load_prototypes(path)
    np.testing.assert_array_equal(loaded.classes, protos.classes)
    np.testing.assert_array_equal(loaded.prototypes, protos.prototypes)
    np.testing.assert_array_equal(loaded.counts, protos.counts)
