"""Model checkpoint files.

Layout (all integers little-endian)::

    bytes 0..3    magic b"CHSM"
    bytes 4..5    format version, u16 (currently 1)
    bytes 6..9    header length H, u32
    bytes 10..    H bytes of UTF-8 JSON header
    then          parameter blocks, raw little-endian floats, in layer order
                  (per layer: weights then bias), each C-contiguous

The header carries the architecture (``spec``), ``seed``, ``training``
config, ``dtype`` ("<f4" by default, "<f8" for float64 models), the block
list with shapes, and ``checksum`` = sha256 hex digest of the block bytes.
JSON keys are sorted so identical models produce identical files.
"""
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .model import Model, ModelSpec

MAGIC = b"CHSM"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")


class CheckpointError(ValueError):
    pass


def dumps_model(model, seed=None, training=None):
    dtype = "<f4" if model.dtype == np.float32 else "<f8"
    blocks, payload = [], []
    for li, layer in enumerate(model.trainable_layers()):
        for name in sorted(layer.params, key="wb".index):
            arr = np.ascontiguousarray(layer.params[name], dtype=dtype)
            blocks.append({"layer": li, "name": name, "shape": list(arr.shape)})
            payload.append(arr.tobytes())
    body = b"".join(payload)
    header = {
        "format": "chaoscope-model",
        "version": VERSION,
        "spec": model.spec.to_dict(),
        "seed": seed,
        "training": training,
        "dtype": dtype,
        "blocks": blocks,
        "checksum": hashlib.sha256(body).hexdigest(),
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return _PREFIX.pack(MAGIC, VERSION, len(hbytes)) + hbytes + body


def loads_model(blob):
    """Parse checkpoint bytes; returns (model, header)."""
    if len(blob) < _PREFIX.size:
        raise CheckpointError("file too short for a checkpoint prefix")
    magic, version, hlen = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError("not a model checkpoint (bad magic)")
    if version != VERSION:
        raise CheckpointError(f"checkpoint version {version} not supported (expected {VERSION})")
    start = _PREFIX.size
    if len(blob) < start + hlen:
        raise CheckpointError("checkpoint truncated inside header")
    try:
        header = json.loads(blob[start:start + hlen])
    except ValueError as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    body = blob[start + hlen:]
    dtype = np.dtype(header["dtype"])
    expected = sum(int(np.prod(b["shape"])) for b in header["blocks"]) * dtype.itemsize
    if len(body) != expected:
        raise CheckpointError(f"checkpoint payload is {len(body)} bytes, expected {expected}")
    if hashlib.sha256(body).hexdigest() != header["checksum"]:
        raise CheckpointError("checkpoint checksum mismatch")
    model = Model(ModelSpec.from_dict(header["spec"]))
    layers = model.trainable_layers()
    offset = 0
    for b in header["blocks"]:
        n = int(np.prod(b["shape"])) * dtype.itemsize
        arr = np.frombuffer(body[offset:offset + n], dtype=dtype).reshape(b["shape"])
        target = layers[b["layer"]].params[b["name"]]
        if target.shape != arr.shape:
            raise CheckpointError(f"block shape {arr.shape} does not match architecture {target.shape}")
        target[...] = arr
        offset += n
    return model, header


def save_model(model, path, seed=None, training=None):
    Path(path).write_bytes(dumps_model(model, seed, training))


def load_model(path):
    model, _ = loads_model(Path(path).read_bytes())
    return model
