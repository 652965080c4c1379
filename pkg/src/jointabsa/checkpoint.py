"""Flat checkpoint archive: named float64 parameter arrays plus one JSON
metadata record.

The archive is a standard .npz file.  Every parameter is stored as
little-endian float64 under its registry name; the metadata (config hash,
step count, vocabulary, hyperparameters) is JSON encoded into a uint8
array under a reserved key.
"""

from __future__ import annotations

import json

import numpy as np

from .autodiff import ShapeError

META_KEY = "__metadata__"


def save_checkpoint(path, params, metadata):
    """Write all registered parameters and a metadata dict to ``path``."""
    arrays = {}
    for name, tensor in params.items():
        if name == META_KEY:
            raise ValueError(f"parameter name {META_KEY!r} is reserved")
        arrays[name] = tensor.data.astype("<f8")
    payload = json.dumps(metadata, sort_keys=True).encode("utf-8")
    arrays[META_KEY] = np.frombuffer(payload, dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Read a checkpoint; returns (name -> float64 array, metadata dict)."""
    with np.load(path) as archive:
        if META_KEY not in archive:
            raise ValueError(f"{path}: not a model checkpoint (missing metadata record)")
        metadata = json.loads(bytes(archive[META_KEY].tobytes()).decode("utf-8"))
        arrays = {
            name: np.asarray(archive[name], dtype=np.float64)
            for name in archive.files
            if name != META_KEY
        }
    return arrays, metadata


def restore_into(params, arrays):
    """Load stored arrays into a parameter registry, checking shapes."""
    stored = set(arrays)
    expected = set(params.names())
    if stored != expected:
        missing = sorted(expected - stored)
        extra = sorted(stored - expected)
        raise ShapeError(f"checkpoint mismatch: missing {missing}, unexpected {extra}")
    params.load_arrays(arrays)
