"""Deterministic binary container: JSON header + raw array payloads.

numpy's npz embeds timestamps, which breaks the byte-identical output
guarantee, so models and caches use this little format instead.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import DataError

MAGIC = b"EFBLOB1\n"


def write_blob(path, header: dict, arrays: list[tuple[str, np.ndarray]]) -> None:
    meta = dict(header)
    meta["arrays"] = [
        {"name": name, "shape": list(arr.shape), "dtype": str(arr.dtype)}
        for name, arr in arrays
    ]
    encoded = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(encoded)))
        fh.write(encoded)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr).tobytes())


def read_blob(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise DataError(f"{path}: not an eleflow blob")
        (length,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(length).decode("utf-8"))
        arrays = {}
        for entry in header.pop("arrays", []):
            dtype = np.dtype(entry["dtype"])
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise DataError(f"{path}: truncated array {entry['name']!r}")
            arrays[entry["name"]] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    return header, arrays
