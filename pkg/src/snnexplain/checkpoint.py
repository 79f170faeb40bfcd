"""Model and prototype persistence.

Checkpoint container layout (all integers little-endian):

    bytes 0..3    magic b"SNNX"
    bytes 4..7    format version (uint32, currently 1)
    bytes 8..11   JSON header length L (uint32)
    bytes 12..    UTF-8 JSON header of L bytes
    remainder     parameter payload: float64 little-endian arrays in header
                  order, C (row-major) layout

The header records the role tag, layer specs, parameter shapes, the training
config snapshot and the RNG seed; round trips are bit-exact."""

from __future__ import annotations

import json
import struct
from typing import Optional, Union

import numpy as np

from .autoencoder import AEModel
from .data import _atomic_write
from .layers import LayerSpec
from .network import NetworkState, build_network
from .siamese import SNNModel

MAGIC = b"SNNX"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class RoleMismatchError(CheckpointError):
    pass


def _net_header(name: str, net: NetworkState) -> dict:
    return {
        "name": name,
        "input_shape": list(net.input_shape),
        "specs": [s.to_dict() for s in net.specs],
        "param_shapes": [[list(p.shape) for p in ps] for ps in net.params],
    }


def _net_payload(net: NetworkState) -> bytes:
    return b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes()
                    for ps in net.params for p in ps)


def _restore_net(header: dict, payload: bytes, offset: int):
    net = build_network([LayerSpec.from_dict(d) for d in header["specs"]],
                        tuple(header["input_shape"]), seed=0)
    expect = [[tuple(s) for s in ps] for ps in header["param_shapes"]]
    got = [[p.shape for p in ps] for ps in net.params]
    if expect != got:
        raise CorruptCheckpointError(
            f"parameter shapes in header do not match specs for {header['name']}")
    for ps in net.params:
        for i, p in enumerate(ps):
            nbytes = p.size * 8
            if offset + nbytes > len(payload):
                raise CorruptCheckpointError("parameter payload truncated")
            ps[i] = np.frombuffer(payload, dtype="<f8", count=p.size,
                                  offset=offset).reshape(p.shape).copy()
            offset += nbytes
    return net, offset


def save_checkpoint(model: Union[SNNModel, AEModel], path: str,
                    config: Optional[dict] = None, seed: int = 0) -> None:
    if isinstance(model, SNNModel):
        role, nets = "snn", [("subnet", model.subnet)]
    elif isinstance(model, AEModel):
        role, nets = "autoencoder", [("encoder", model.encoder),
                                     ("decoder", model.decoder)]
    else:
        raise TypeError(f"cannot checkpoint a {type(model).__name__}")
    header = {
        "role": role,
        "seed": seed,
        "config": config or {},
        "networks": [_net_header(name, net) for name, net in nets],
    }
    hjson = json.dumps(header, sort_keys=True).encode()
    payload = b"".join(_net_payload(net) for _, net in nets)
    blob = MAGIC + struct.pack("<II", FORMAT_VERSION, len(hjson)) + hjson + payload
    _atomic_write(path, blob)


def load_checkpoint(path: str, expect_role: Optional[str] = None
                    ) -> Union[SNNModel, AEModel]:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise CorruptCheckpointError(f"{path} is not a checkpoint file")
    version, hlen = struct.unpack("<II", blob[4:12])
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path} has format version {version}, expected {FORMAT_VERSION}")
    if len(blob) < 12 + hlen:
        raise CorruptCheckpointError(f"{path}: header truncated")
    try:
        header = json.loads(blob[12:12 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptCheckpointError(f"{path}: unreadable header ({e})") from None
    role = header.get("role")
    if expect_role is not None and role != expect_role:
        raise RoleMismatchError(
            f"{path} holds a {role!r} model, expected {expect_role!r}")
    payload = blob[12 + hlen:]
    nets = {}
    offset = 0
    for nh in header["networks"]:
        nets[nh["name"]], offset = _restore_net(nh, payload, offset)
    if offset != len(payload):
        raise CorruptCheckpointError(
            f"{path}: {len(payload) - offset} trailing payload bytes")
    if role == "snn":
        return SNNModel(nets["subnet"])
    if role == "autoencoder":
        return AEModel(nets["encoder"], nets["decoder"])
    raise CorruptCheckpointError(f"{path}: unknown role tag {role!r}")


def checkpoint_config(path: str) -> dict:
    """Training config snapshot stored in a checkpoint header."""
    with open(path, "rb") as f:
        blob = f.read(12)
        if len(blob) < 12 or blob[:4] != MAGIC:
            raise CorruptCheckpointError(f"{path} is not a checkpoint file")
        _, hlen = struct.unpack("<II", blob[4:12])
        return json.loads(f.read(hlen).decode()).get("config", {})


def save_prototypes(protos, path: str) -> None:
    from .explain import PrototypeSet  # local import to avoid a cycle
    assert isinstance(protos, PrototypeSet)
    doc = {
        "classes": [int(c) for c in protos.classes],
        "counts": [int(c) for c in protos.counts],
        "prototypes": [[float(v) for v in row] for row in protos.prototypes],
    }
    _atomic_write(path, json.dumps(doc, sort_keys=True, indent=1).encode())


def load_prototypes(path: str):
    from .explain import PrototypeSet
    with open(path) as f:
        doc = json.load(f)
    return PrototypeSet(np.array(doc["classes"]),
                        np.array(doc["prototypes"], dtype=np.float64),
                        np.array(doc["counts"]))
