"""Parameter checkpoints: a JSON header followed by little-endian float64 payloads.

Layout::

    b"GSRCKPT1"                      8-byte magic
    uint64 little-endian             header length in bytes
    UTF-8 JSON header                {"dtype": "<f8", "arrays": [{"name", "shape", "offset"}, ...]}
    payload                          arrays back to back, row-major; offsets relative to payload start
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"GSRCKPT1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, arrays: Mapping[str, np.ndarray]) -> None:
    entries = []
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        data = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
        entries.append({"name": name, "shape": list(data.shape), "offset": offset})
        blob = data.tobytes()
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"dtype": "<f8", "arrays": entries}, sort_keys=True).encode("utf-8")
    with open(Path(path), "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    payload = raw[16 + hlen:]
    out = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + 8 * count
        if end > len(payload):
            raise CheckpointError(f"{path}: array {entry['name']!r} is truncated")
        out[entry["name"]] = np.frombuffer(payload[start:end], dtype="<f8").reshape(shape).astype(np.float64)
    return out
