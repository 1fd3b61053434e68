"""Checkpoint serialization.

A checkpoint is two files sharing a prefix:

* ``<prefix>.manifest.json`` — UTF-8 JSON mapping parameter name to
  ``{"shape": [...], "offset": byte offset, "length": byte length}``
* ``<prefix>.bin`` — concatenated little-endian IEEE-754 float64 values

The round trip is bit-exact.
"""

from __future__ import annotations

import json
import os

import numpy as np


def save_arrays(arrays, prefix):
    """Write ``name -> ndarray`` to ``<prefix>.manifest.json`` + ``<prefix>.bin``."""
    manifest = {}
    offset = 0
    chunks = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        raw = arr.tobytes()
        manifest[name] = {"shape": list(arr.shape), "offset": offset, "length": len(raw)}
        chunks.append(raw)
        offset += len(raw)
    with open(prefix + ".bin", "wb") as f:
        for chunk in chunks:
            f.write(chunk)
    with open(prefix + ".manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)


def load_arrays(prefix):
    """Inverse of :func:`save_arrays`; returns ``name -> ndarray``."""
    manifest_path = prefix + ".manifest.json"
    blob_path = prefix + ".bin"
    for path in (manifest_path, blob_path):
        if not os.path.exists(path):
            raise FileNotFoundError(path)
    with open(manifest_path, encoding="utf-8") as f:
        manifest = json.load(f)
    with open(blob_path, "rb") as f:
        blob = f.read()
    arrays = {}
    for name, entry in manifest.items():
        raw = blob[entry["offset"] : entry["offset"] + entry["length"]]
        arr = np.frombuffer(raw, dtype="<f8").reshape(entry["shape"]).copy()
        arrays[name] = arr
    return arrays
