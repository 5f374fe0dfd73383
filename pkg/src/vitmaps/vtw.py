"""VTW weight file: framework-free container for named f32 tensors.

Layout:
  bytes 0..7    magic ``VITWGT01``
  bytes 8..11   u32 little-endian manifest length L
  bytes 12..12+L  UTF-8 JSON manifest (space-padded so the data region
                  starts 64-byte aligned): array of
                  ``{"name", "dtype": "f32", "shape": [...], "offset"}``
  data region   raw little-endian f32 payload, row-major; ``offset`` is
                relative to the region start and 64-byte aligned per tensor.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import WeightFormatError

MAGIC = b"VITWGT01"
_ALIGN = 64


def _aligned(n: int) -> int:
    return (n + _ALIGN - 1) // _ALIGN * _ALIGN


def write_vtw(path: str | Path, tensors: Mapping[str, np.ndarray]) -> None:
    """Write tensors (cast to f32) in sorted-name order; deterministic bytes."""
    names = sorted(tensors)
    entries = []
    offset = 0
    payload = []
    for name in names:
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        entries.append({"name": name, "dtype": "f32", "shape": list(arr.shape), "offset": offset})
        payload.append(arr.tobytes())
        offset = _aligned(offset + arr.nbytes)
    manifest = json.dumps(entries, sort_keys=True).encode("utf-8")
    header_len = len(MAGIC) + 4
    manifest_len = _aligned(header_len + len(manifest)) - header_len
    manifest = manifest + b" " * (manifest_len - len(manifest))
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", manifest_len))
        f.write(manifest)
        for i, raw in enumerate(payload):
            pad = entries[i]["offset"] - (f.tell() - header_len - manifest_len)
            f.write(b"\x00" * pad)
            f.write(raw)


def read_manifest(path: str | Path) -> list[dict]:
    """Parse and validate the header + manifest without touching the payload."""
    with open(path, "rb") as f:
        head = f.read(len(MAGIC))
        if head != MAGIC:
            raise WeightFormatError(
                f"{path}: bad magic {head!r}, expected {MAGIC!r}"
            )
        raw_len = f.read(4)
        if len(raw_len) != 4:
            raise WeightFormatError(f"{path}: truncated manifest length field")
        (manifest_len,) = struct.unpack("<I", raw_len)
        manifest = f.read(manifest_len)
        if len(manifest) != manifest_len:
            raise WeightFormatError(f"{path}: truncated manifest")
    try:
        entries = json.loads(manifest.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightFormatError(f"{path}: manifest is not valid JSON: {exc}") from exc
    if not isinstance(entries, list):
        raise WeightFormatError(f"{path}: manifest must be a JSON array")
    seen = set()
    for e in entries:
        for key in ("name", "dtype", "shape", "offset"):
            if key not in e:
                raise WeightFormatError(f"{path}: manifest entry missing {key!r}: {e}")
        if e["dtype"] != "f32":
            raise WeightFormatError(f"{path}: tensor {e['name']!r} has dtype {e['dtype']!r}, only f32 supported")
        if e["name"] in seen:
            raise WeightFormatError(f"{path}: duplicate tensor name {e['name']!r}")
        seen.add(e["name"])
    return entries


def read_vtw(path: str | Path) -> dict[str, np.ndarray]:
    """Load every tensor from a VTW file as float32 arrays."""
    entries = read_manifest(path)
    path = Path(path)
    blob = path.read_bytes()
    (manifest_len,) = struct.unpack("<I", blob[8:12])
    data_start = len(MAGIC) + 4 + manifest_len
    out: dict[str, np.ndarray] = {}
    for e in entries:
        count = int(np.prod(e["shape"], dtype=np.int64)) if e["shape"] else 1
        begin = data_start + e["offset"]
        end = begin + count * 4
        if end > len(blob):
            raise WeightFormatError(
                f"{path}: data region truncated for tensor {e['name']!r} "
                f"(need {end} bytes, file has {len(blob)})"
            )
        arr = np.frombuffer(blob[begin:end], dtype="<f4").reshape(e["shape"])
        out[e["name"]] = arr.astype(np.float32)
    return out
