"""Flat binary checkpoint container.

Byte layout (all integers little-endian)::

    offset  size  field
    0       8     magic b"JMPNNCKP"
    8       4     uint32 format version (currently 1)
    12      8     uint64 header length H in bytes
    20      H     UTF-8 JSON header
    20+H    pad   zero bytes up to the next multiple of 8
    D       ...   tensor data, each tensor as contiguous little-endian float64
                  in C order

The JSON header is an object with free-form metadata (model hyperparameters,
label transform, training state) plus ``"tensors"``: a list of
``{"name", "shape", "offset", "count"}`` where ``offset`` is in bytes from
``D`` and ``count`` is the number of float64 values. Tensors are stored in
header order without gaps.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from ..exceptions import CheckpointError

MAGIC = b"JMPNNCKP"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


def dumps(header: dict, arrays: dict) -> bytes:
    index, blobs, offset = [], [], 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        index.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    head = dict(header)
    head["tensors"] = index
    head_bytes = json.dumps(head, sort_keys=True, separators=(",", ":")).encode("utf-8")
    pad = (-(_PREFIX.size + len(head_bytes))) % 8
    return b"".join([_PREFIX.pack(MAGIC, FORMAT_VERSION, len(head_bytes)), head_bytes, b"\0" * pad, *blobs])


def loads(data: bytes) -> tuple[dict, dict]:
    if len(data) < _PREFIX.size:
        raise CheckpointError("file too short to be a checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version}")
    start = _PREFIX.size
    try:
        header = json.loads(data[start : start + hlen].decode("utf-8"))
    except ValueError as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    base = start + hlen + ((-(start + hlen)) % 8)
    arrays = {}
    for t in header.pop("tensors", []):
        lo = base + t["offset"]
        hi = lo + 8 * t["count"]
        if hi > len(data):
            raise CheckpointError(f"tensor {t['name']!r} extends past end of file")
        arrays[t["name"]] = np.frombuffer(data[lo:hi], dtype="<f8").astype(np.float64).reshape(t["shape"])
    return header, arrays


def save(path, header: dict, arrays: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(header, arrays))


def load(path) -> tuple[dict, dict]:
    with open(path, "rb") as fh:
        return loads(fh.read())
