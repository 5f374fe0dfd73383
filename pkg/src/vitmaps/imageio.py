"""Image readers/writers: binary PPM (P6) handled natively so fixtures are
bit-exact, PNG and friends delegated to Pillow.  Saliency dumps go out as
16-bit PGM plus a raw little-endian f32 grid with a JSON sidecar."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ImageFormatError


def _read_ppm_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    # skip whitespace and '#' comments
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c in b" \t\r\n":
            pos += 1
        elif c == b"#":
            while pos < n and buf[pos : pos + 1] != b"\n":
                pos += 1
        else:
            break
    start = pos
    while pos < n and buf[pos : pos + 1] not in b" \t\r\n":
        pos += 1
    if start == pos:
        raise ImageFormatError("truncated PPM header")
    return buf[start:pos], pos


def read_ppm(path: str | Path) -> np.ndarray:
    """Read a binary (P6) 8-bit PPM into an (H, W, 3) uint8 array."""
    buf = Path(path).read_bytes()
    magic, pos = _read_ppm_token(buf, 0)
    if magic != b"P6":
        raise ImageFormatError(f"{path}: not a binary PPM (magic {magic!r}, expected b'P6')")
    fields = []
    for _ in range(3):
        tok, pos = _read_ppm_token(buf, pos)
        fields.append(int(tok))
    width, height, maxval = fields
    if maxval != 255:
        raise ImageFormatError(f"{path}: only 8-bit PPM supported (maxval {maxval})")
    pos += 1  # single whitespace byte after maxval
    need = width * height * 3
    raster = buf[pos : pos + need]
    if len(raster) != need:
        raise ImageFormatError(f"{path}: raster truncated ({len(raster)} of {need} bytes)")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()


def write_ppm(path: str | Path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ImageFormatError(f"expected (H, W, 3) uint8 image, got {image.shape}")
    h, w = image.shape[:2]
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(image.tobytes())


def read_image(path: str | Path) -> np.ndarray:
    """Read an 8-bit RGB image (PPM natively, others via Pillow)."""
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pnm"):
        return read_ppm(path)
    with Image.open(path) as im:
        if im.mode != "RGB":
            raise ImageFormatError(f"{path}: mode {im.mode!r} rejected, 8-bit RGB required")
        return np.asarray(im, dtype=np.uint8)


def write_pgm16(path: str | Path, values: np.ndarray) -> None:
    """Write a 2-d float map as 16-bit big-endian PGM, min-max scaled.

    Visualization only: absolute scale is not preserved.  A constant map
    comes out all-zero.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ImageFormatError(f"expected a 2-d map, got shape {values.shape}")
    lo, hi = float(values.min()), float(values.max())
    if hi > lo:
        scaled = np.round((values - lo) / (hi - lo) * 65535.0)
    else:
        scaled = np.zeros_like(values)
    h, w = values.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n65535\n" % (w, h))
        f.write(scaled.astype(">u2").tobytes())


def write_raw_grid(path: str | Path, grid: np.ndarray, method: str) -> None:
    """Dump a map as raw little-endian f32 plus a one-line JSON sidecar."""
    path = Path(path)
    grid = np.asarray(grid)
    with open(path, "wb") as f:
        f.write(grid.astype("<f4").tobytes())
    sidecar = {"shape": list(grid.shape), "method": method}
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, sort_keys=True) + "\n"
    )


def read_raw_grid(path: str | Path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    flat = np.frombuffer(path.read_bytes(), dtype="<f4")
    return flat.reshape(meta["shape"]).copy(), meta
