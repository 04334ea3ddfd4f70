"""Versioned binary checkpoint container.

Layout: 8-byte magic, uint32 format version, uint64 header length, a UTF-8
JSON header (metadata, name/shape/offset per array and a SHA-256 of the
payload), then every array's raw little-endian float64 bytes back to back. Everything is little-endian
and written in sorted-name order, so equal contents give equal files.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np

MAGIC = b"DADAPT\x00\x01"
VERSION = 1


class CheckpointError(ValueError):
    pass


def config_hash(config: Mapping[str, Any]) -> str:
    blob = json.dumps(config, sort_keys=True, default=list).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save(path: str | Path, arrays: Mapping[str, np.ndarray], meta: Mapping[str, Any]) -> None:
    names = sorted(arrays)
    entries, offset = [], 0
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    payload = b"".join(blobs)
    header = json.dumps({"meta": meta, "arrays": entries, "sha256": hashlib.sha256(payload).hexdigest()},
                        sort_keys=True).encode()
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        fh.write(payload)
    tmp.replace(path)


def load(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    raw = Path(path).read_bytes()
    if len(raw) < 20 or raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<IQ", raw[8:20])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(raw[20:20 + hlen])
    except ValueError as exc:
        raise CheckpointError(f"{path}: unreadable header") from exc
    base = 20 + hlen
    if hashlib.sha256(raw[base:]).hexdigest() != header.get("sha256"):
        raise CheckpointError(f"{path}: payload is truncated or corrupted")
    arrays = {}
    for e in header["arrays"]:
        n = int(np.prod(e["shape"])) if e["shape"] else 1
        start = base + e["offset"]
        arr = np.frombuffer(raw, dtype="<f8", count=n, offset=start)
        arrays[e["name"]] = arr.reshape(e["shape"]).astype(np.float64)
    return arrays, header["meta"]


def prefixed(prefix: str, arrays: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {f"{prefix}/{k}": v for k, v in arrays.items()}


def unprefixed(prefix: str, arrays: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    p = prefix + "/"
    return {k[len(p):]: v for k, v in arrays.items() if k.startswith(p)}
