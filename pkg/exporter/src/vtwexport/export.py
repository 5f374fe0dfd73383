"""Checkpoint -> VTW conversion with an export manifest."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from .mapping import ExportConfig, canonical_shapes, torchvision_mapping
from .vtwio import write_vtw


class ExportError(ValueError):
    pass


def load_checkpoint(src: str | Path) -> dict[str, torch.Tensor]:
    obj = torch.load(src, map_location="cpu", weights_only=True)
    if hasattr(obj, "state_dict"):
        obj = obj.state_dict()
    if not isinstance(obj, dict):
        raise ExportError(f"{src}: expected a state dict, got {type(obj).__name__}")
    return {k: v for k, v in obj.items() if isinstance(v, torch.Tensor)}


def export(
    state: dict[str, torch.Tensor],
    config: ExportConfig,
    out_path: str | Path,
    mapping: dict[str, str] | None = None,
    source: str = "",
) -> dict:
    """Write a VTW file; returns the export manifest (also written next to it).

    The mapping must cover every canonical name exactly once.  Source tensors
    are reshaped onto the canonical shapes (all torchvision adaptations are
    pure reshapes: packed class token, conv patch kernel, batched positional
    embedding); any element-count mismatch is an error naming the tensor.
    """
    mapping = mapping or torchvision_mapping(config.depth)
    expected = canonical_shapes(config)

    targets = list(mapping.values())
    dupes = sorted({t for t in targets if targets.count(t) > 1})
    if dupes:
        raise ExportError(f"mapping hits canonical names more than once: {', '.join(dupes)}")
    uncovered = sorted(set(expected) - set(targets))
    if uncovered:
        raise ExportError(f"mapping does not cover: {', '.join(uncovered)}")

    missing = sorted(src for src, dst in mapping.items() if dst in expected and src not in state)
    if missing:
        named = ", ".join(f"{s} -> {mapping[s]}" for s in missing)
        raise ExportError(f"checkpoint is missing parameters: {named}")

    tensors: dict[str, np.ndarray] = {}
    for src_name, dst_name in mapping.items():
        if dst_name not in expected:
            continue
        shape = expected[dst_name]
        arr = state[src_name].detach().cpu().numpy()
        if arr.size != int(np.prod(shape)):
            raise ExportError(
                f"{dst_name}: source {src_name} has {arr.size} elements, expected shape {shape}"
            )
        tensors[dst_name] = np.ascontiguousarray(arr, dtype=np.float32).reshape(shape)

    out_path = Path(out_path)
    write_vtw(out_path, tensors)
    digest = hashlib.sha256(out_path.read_bytes()).hexdigest()
    manifest = {
        "source": source,
        "config": asdict(config),
        "mapping": dict(sorted(mapping.items())),
        "content_hash": f"sha256:{digest}",
    }
    out_path.with_suffix(out_path.suffix + ".manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    return manifest
