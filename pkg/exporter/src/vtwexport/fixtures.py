"""Parity fixture bundles: preprocessed inputs plus reference outputs.

A bundle directory holds ``meta.json`` and raw little-endian f32 tensors:

    meta.json            config, preprocessing, sample table with shapes
    input_NNN.f32        [3, S, S] preprocessed image
    logits_NNN.f32       [num_classes]
    attention_NNN.f32    [heads, T, T] final-layer post-softmax attention
    chefer_NNN.f32       [G, G] relevance grid (reference autograd), optional

Inputs are stored already preprocessed so consumers compare pure model math,
independent of image decoding and resizing choices.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .mapping import ExportConfig
from .reference import reference_chefer, reference_forward

DEFAULT_MEAN = (0.485, 0.456, 0.406)
DEFAULT_STD = (0.229, 0.224, 0.225)


def _write_f32(path: Path, arr: np.ndarray) -> None:
    path.write_bytes(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def preprocess_image(
    path: str | Path, cfg: ExportConfig,
    mean: tuple[float, float, float] = DEFAULT_MEAN,
    std: tuple[float, float, float] = DEFAULT_STD,
) -> torch.Tensor:
    """8-bit RGB file -> [3, S, S] float32 (bilinear resize, scale, normalize)."""
    with Image.open(path) as im:
        if im.mode != "RGB":
            raise ValueError(f"{path}: mode {im.mode!r}, 8-bit RGB required")
        arr = np.asarray(im, dtype=np.float32) / 255.0
    x = torch.from_numpy(arr).permute(2, 0, 1)
    s = cfg.image_size
    if x.shape[-2:] != (s, s):
        x = torch.nn.functional.interpolate(
            x.unsqueeze(0), size=(s, s), mode="bilinear", align_corners=False, antialias=False
        )[0]
    m = torch.tensor(mean).reshape(3, 1, 1)
    sd = torch.tensor(std).reshape(3, 1, 1)
    return (x - m) / sd


def emit_parity_fixture(
    state: dict[str, torch.Tensor],
    cfg: ExportConfig,
    inputs: list[torch.Tensor],
    out_dir: str | Path,
    source: str = "",
    with_chefer: bool = True,
) -> dict:
    """Run the reference model on preprocessed inputs; write the bundle."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    g = cfg.image_size // cfg.patch_size
    samples = []
    for idx, x in enumerate(inputs):
        x = x.detach().float()
        with torch.no_grad():
            out = reference_forward(state, cfg, x)
        logits = out.logits.numpy()
        attn_last = out.attention_maps()[-1].numpy()
        sample = {
            "input": f"input_{idx:03d}.f32",
            "logits": f"logits_{idx:03d}.f32",
            "attention": f"attention_{idx:03d}.f32",
            "top1": int(logits.argmax()),
            "shapes": {
                "input": list(x.shape),
                "logits": list(logits.shape),
                "attention": list(attn_last.shape),
            },
        }
        _write_f32(out_dir / sample["input"], x.numpy())
        _write_f32(out_dir / sample["logits"], logits)
        _write_f32(out_dir / sample["attention"], attn_last)
        if with_chefer:
            target = int(logits.argmax())
            grid = reference_chefer(state, cfg, x, target).numpy()
            sample["chefer"] = f"chefer_{idx:03d}.f32"
            sample["chefer_class"] = target
            sample["shapes"]["chefer"] = [g, g]
            _write_f32(out_dir / sample["chefer"], grid)
        samples.append(sample)
    meta = {"source": source, "config": asdict(cfg), "samples": samples}
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return meta


def read_fixture(out_dir: str | Path) -> tuple[dict, list[dict[str, np.ndarray]]]:
    """Load a bundle back as numpy arrays keyed like the sample table."""
    out_dir = Path(out_dir)
    meta = json.loads((out_dir / "meta.json").read_text())
    loaded = []
    for sample in meta["samples"]:
        arrays = {}
        for key, shape in sample["shapes"].items():
            raw = (out_dir / sample[key]).read_bytes()
            arrays[key] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        loaded.append(arrays)
    return meta, loaded
