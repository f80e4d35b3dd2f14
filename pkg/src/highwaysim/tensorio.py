"""Tiny versioned tensor-bundle file format.

Layout: one UTF-8 JSON header line (magic, version, ordered array specs, free
meta dict) terminated by ``\\n``, followed by each array's raw little-endian
bytes in header order. Deterministic byte-for-byte for identical content,
unlike zip-based containers that embed timestamps.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = "tensor-bundle"
VERSION = 1


def save_bundle(path: str | Path, arrays: dict[str, np.ndarray], meta: dict | None = None):
    specs = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        dtype = arr.dtype.newbyteorder("<")
        specs.append({"name": name, "shape": list(arr.shape), "dtype": dtype.str})
        blobs.append(arr.astype(dtype, copy=False).tobytes())
    header = {"magic": MAGIC, "version": VERSION, "arrays": specs, "meta": meta or {}}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for blob in blobs:
            fh.write(blob)


def load_bundle(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"{path}: not a tensor bundle ({exc})") from None
        if header.get("magic") != MAGIC:
            raise ValueError(f"{path}: bad magic {header.get('magic')!r}")
        if header.get("version") != VERSION:
            raise ValueError(f"{path}: unsupported version {header.get('version')!r}")
        arrays = {}
        for spec in header["arrays"]:
            dtype = np.dtype(spec["dtype"])
            count = int(np.prod(spec["shape"])) if spec["shape"] else 1
            buf = fh.read(count * dtype.itemsize)
            if len(buf) != count * dtype.itemsize:
                raise ValueError(f"{path}: truncated array {spec['name']}")
            arrays[spec["name"]] = np.frombuffer(buf, dtype=dtype).reshape(spec["shape"]).copy()
    return arrays, header.get("meta", {})
