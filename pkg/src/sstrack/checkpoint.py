"""Versioned binary checkpoint container.

Layout: 8-byte magic ``SSTCKPT1``, a little-endian uint32 manifest length,
a UTF-8 JSON manifest listing ``(name, dtype, shape)`` per tensor plus a
free-form ``meta`` dict, then the raw little-endian float32 blobs in
manifest order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SSTCKPT1"


class CheckpointError(RuntimeError):
    """Raised on malformed or truncated checkpoint files."""


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict | None = None):
    """Write named arrays (cast to float32) and a JSON-able meta dict."""
    entries = []
    blobs = []
    for name, arr in tensors.items():
        blob = np.ascontiguousarray(arr, dtype="<f4")
        entries.append({"name": name, "dtype": "f4", "shape": list(blob.shape)})
        blobs.append(blob.tobytes())
    manifest = json.dumps({"tensors": entries, "meta": meta or {}},
                          sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(manifest)))
        f.write(manifest)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read back ``(tensors, meta)``; raises CheckpointError on bad files."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:8]!r}, expected {MAGIC!r}")
    (mlen,) = struct.unpack("<I", raw[8:12])
    try:
        manifest = json.loads(raw[12:12 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: unreadable manifest: {e}") from e
    tensors = {}
    offset = 12 + mlen
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 4
        chunk = raw[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path}: truncated blob for {entry['name']!r}")
        tensors[entry["name"]] = np.frombuffer(chunk, dtype="<f4").reshape(shape).copy()
        offset += nbytes
    return tensors, manifest.get("meta", {})
