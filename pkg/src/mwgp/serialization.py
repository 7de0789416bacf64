"""Binary model and checkpoint files.

Layout (all integers little-endian):

    magic      8 bytes  b"MWGPMDL\\0"
    version    uint32
    hdr_len    uint64
    header     hdr_len bytes of UTF-8 JSON: config, y_mean, id tables, array index
    arrays     concatenated little-endian float64 data in header order

Each array entry in the header carries its name, shape and byte offset, so
files can be inspected without this package. Output is deterministic: the
same state always produces the same bytes.
"""
import json
import struct
from dataclasses import asdict

import numpy as np

from .errors import MWGPError
from .model import ModelConfig, flatten_params, make_layout, state_from_vector

MAGIC = b"MWGPMDL\0"
FORMAT_VERSION = 1


class VersionMismatch(MWGPError):
    pass


def _write(path, config, y_mean, arrays, extra):
    index, offset = [], 0
    for name, arr in arrays:
        index.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    header = {
        "format_version": FORMAT_VERSION,
        "config": asdict(config),
        "y_mean": float(y_mean),
        "arrays": index,
        **extra,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read(path):
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise MWGPError(f"{path} is not a model file")
        version, hdr_len = struct.unpack("<IQ", fh.read(12))
        if version != FORMAT_VERSION:
            raise VersionMismatch(f"{path} has format version {version}, expected {FORMAT_VERSION}")
        header = json.loads(fh.read(hdr_len).decode("utf-8"))
        body = fh.read()
    arrays = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        flat = np.frombuffer(body, dtype="<f8", count=count, offset=entry["offset"])
        arrays[entry["name"]] = flat.astype(np.float64).reshape(entry["shape"])
    return header, arrays


def save_model(path, state, user_ids=None, item_ids=None, extra=None):
    theta, _ = flatten_params(state)
    meta = {
        "user_ids": list(user_ids) if user_ids is not None else None,
        "item_ids": list(item_ids) if item_ids is not None else None,
        **(extra or {}),
    }
    _write(path, state.config, state.y_mean, [("theta", theta)], meta)


def _state_from(header, arrays):
    config = ModelConfig(**header["config"])
    theta = arrays["theta"]
    if theta.size != make_layout(config).size:
        raise MWGPError("parameter vector length does not match the stored config")
    return state_from_vector(theta, config, header["y_mean"])


def load_model(path):
    """Return (state, header); header carries the id tables and any extra metadata."""
    header, arrays = _read(path)
    return _state_from(header, arrays), header


def save_checkpoint(path, state, moments, epoch, user_ids=None, item_ids=None):
    theta, _ = flatten_params(state)
    meta = {
        "user_ids": list(user_ids) if user_ids is not None else None,
        "item_ids": list(item_ids) if item_ids is not None else None,
        "adam_t": int(moments.t),
        "epoch": int(epoch),
    }
    _write(path, state.config, state.y_mean,
           [("theta", theta), ("adam_m", moments.m), ("adam_v", moments.v)], meta)


def load_checkpoint(path):
    from .trainer import AdamState

    header, arrays = _read(path)
    state = _state_from(header, arrays)
    moments = AdamState(arrays["adam_m"].copy(), arrays["adam_v"].copy(), header["adam_t"])
    return state, moments, header
