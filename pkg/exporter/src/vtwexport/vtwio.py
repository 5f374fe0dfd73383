"""Standalone VTW writer/reader.

Deliberately independent of the inference engine's implementation: the file
format is the contract between the two packages, and round-trips are checked
against it, not against shared code.

Layout: ``VITWGT01`` magic, u32 LE manifest length, space-padded JSON manifest
(``[{"name", "dtype": "f32", "shape", "offset"}, ...]``), then a 64-byte
aligned data region of raw little-endian f32 tensors (offsets relative to the
region start, each a multiple of 64).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"VITWGT01"
_ALIGN = 64


def _aligned(n: int) -> int:
    return (n + _ALIGN - 1) // _ALIGN * _ALIGN


def write_vtw(path: str | Path, tensors: Mapping[str, np.ndarray]) -> None:
    names = sorted(tensors)
    entries = []
    blobs = []
    offset = 0
    for name in names:
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        entries.append({"name": name, "dtype": "f32", "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset = _aligned(offset + arr.nbytes)
    manifest = json.dumps(entries, sort_keys=True).encode("utf-8")
    header = len(MAGIC) + 4
    manifest_len = _aligned(header + len(manifest)) - header
    manifest += b" " * (manifest_len - len(manifest))
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", manifest_len))
        f.write(manifest)
        pos = 0
        for entry, blob in zip(entries, blobs):
            f.write(b"\x00" * (entry["offset"] - pos))
            f.write(blob)
            pos = entry["offset"] + len(blob)


def read_vtw(path: str | Path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:8]!r}, expected {MAGIC!r}")
    (manifest_len,) = struct.unpack("<I", blob[8:12])
    entries = json.loads(blob[12 : 12 + manifest_len].decode("utf-8"))
    data_start = 12 + manifest_len
    out = {}
    for e in entries:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        begin = data_start + e["offset"]
        out[e["name"]] = (
            np.frombuffer(blob[begin : begin + 4 * count], dtype="<f4").reshape(e["shape"]).copy()
        )
    return out
