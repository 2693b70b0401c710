"""Binary checkpoint container for trained models.

Byte layout (all integers little-endian)::

    offset  size  content
    0       8     magic  b"TAILFLW\\x00"
    8       4     format version (uint32), currently 1
    12      8     header length H in bytes (uint64)
    20      H     UTF-8 JSON header
    20+H    ...   tensor payload: float64 little-endian ('<f8'), C order

The header holds the network configuration, the serialized transform,
schedule and training configuration, the training log, the seed and a
tensor table ``[{"name", "shape", "offset"}]`` where ``offset`` counts bytes
from the start of the payload.  Tensors are ``layer{i}.weight``,
``layer{i}.bias``, ``frequencies``, ``shift`` and ``scale``.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .flow.model import TrainConfig, TrainedModel, TrainLog
from .flow.schedules import Schedule
from .nn import VelocityNet
from .transforms import TransformSpec

MAGIC = b"TAILFLW\x00"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


class CheckpointError(ValueError):
    pass


def _tensors(model: TrainedModel):
    net = model.net
    out = []
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        out.append((f"layer{i}.weight", W))
        out.append((f"layer{i}.bias", b))
    out.append(("frequencies", net.frequencies))
    out.append(("shift", model.shift))
    out.append(("scale", model.scale))
    return out


def save_model(model: TrainedModel, path) -> None:
    if not isinstance(model.net, VelocityNet):
        raise TypeError("only VelocityNet-based models can be checkpointed")
    table, blobs, offset = [], [], 0
    for name, arr in _tensors(model):
        data = np.ascontiguousarray(arr, dtype="<f8")
        table.append({"name": name, "shape": list(data.shape), "offset": offset})
        blobs.append(data.tobytes())
        offset += data.nbytes
    header = {
        "net": model.net.config(),
        "transform": model.transform.to_dict(),
        "schedule": model.schedule.to_dict(),
        "train_config": None if model.config is None else model.config.to_dict(),
        "log": model.log.to_dict(),
        "seed": model.seed,
        "tensors": table,
    }
    head = json.dumps(header, allow_nan=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(head)))
        fh.write(head)
        for blob in blobs:
            fh.write(blob)


def load_model(path) -> TrainedModel:
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size:
        raise CheckpointError("file too short for a checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError("not a tailflow checkpoint (bad magic)")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = _PREFIX.size
    header = json.loads(raw[start:start + hlen].decode("utf-8"))
    payload = memoryview(raw)[start + hlen:]

    tensors = {}
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        end = entry["offset"] + 8 * count
        if end > len(payload):
            raise CheckpointError(f"tensor {entry['name']} runs past the end of the file")
        arr = np.frombuffer(payload[entry["offset"]:end], dtype="<f8")
        tensors[entry["name"]] = arr.reshape(entry["shape"]).astype(np.float64)

    cfg = header["net"]
    net = VelocityNet(cfg["d"], cfg["hidden"], cfg["n_layers"], cfg["embed_dim"],
                      frequencies=tensors["frequencies"])
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        W[...] = tensors[f"layer{i}.weight"]
        b[...] = tensors[f"layer{i}.bias"]
    tc = header.get("train_config")
    return TrainedModel(
        net,
        TransformSpec.from_dict(header["transform"]),
        Schedule.from_dict(header["schedule"]),
        shift=tensors["shift"],
        scale=tensors["scale"],
        log=TrainLog.from_dict(header["log"]),
        seed=header.get("seed"),
        config=None if tc is None else TrainConfig(**tc),
    )
