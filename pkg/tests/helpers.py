"""Shared fixture builders: random tiny models, the brightest-patch model,
and the synthetic bright-square dataset."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from vitmaps import Tensor, ViTConfig, WeightStore
from vitmaps.imageio import write_ppm
from vitmaps.model import canonical_shapes
from vitmaps.tensor import layernorm
from vitmaps.vtw import write_vtw

TINY = ViTConfig(image_size=16, patch_size=4, embed_dim=16, depth=2, heads=2)


def random_weights(config: ViTConfig, rng: np.random.Generator, dtype: str = "f64",
                   scale: float = 0.05) -> WeightStore:
    tensors = {
        name: Tensor(rng.normal(0.0, scale, shape), dtype=dtype)
        for name, shape in canonical_shapes(config).items()
    }
    return WeightStore(tensors, config)


def weights_to_arrays(ws: WeightStore) -> dict[str, np.ndarray]:
    return {name: ws[name].array for name in ws.names()}


def write_random_vtw(path: Path, config: ViTConfig, seed: int = 0) -> WeightStore:
    ws = random_weights(config, np.random.default_rng(seed), dtype="f32")
    write_vtw(path, weights_to_arrays(ws))
    return ws


def brightest_patch_model(beta: float = 40.0) -> tuple[ViTConfig, WeightStore]:
    """Single-layer, single-head model whose [cls] attention concentrates on
    the brightest patch.

    Patch embeddings are [mean_brightness, 1, 0, 0]; the key projection reads
    a direction that is orthogonal to the normalized [cls] embedding and
    increases monotonically with patch brightness, so the [cls] attention row
    softmax peaks at the brightest patch.  Everything downstream (values,
    projection, MLP, head) is zeroed.
    """
    cfg = ViTConfig(image_size=224, patch_size=16, embed_dim=4, depth=1, heads=1)
    shapes = canonical_shapes(cfg)
    w = {name: np.zeros(shape, dtype=np.float64) for name, shape in shapes.items()}

    pv = 3 * cfg.patch_size * cfg.patch_size
    w["patch_embed.weight"][0, :] = 1.0 / pv  # channel 0 = mean patch brightness
    w["patch_embed.bias"][1] = 1.0  # constant reference channel
    w["cls_token"][0] = [0.0, 0.0, 0.0, 1.0]

    # key direction orthogonal to the layer-normed cls embedding
    cls_hat = layernorm(
        Tensor(w["cls_token"], dtype="f64"),
        Tensor(np.ones(4), dtype="f64"),
        Tensor(np.zeros(4), dtype="f64"),
    ).array[0]
    gamma_k = -cls_hat[0] / cls_hat[3]
    d = cfg.embed_dim
    qkv = w["blocks.0.attn.qkv.weight"]  # rows [0:d] = Q, [d:2d] = K, [2d:3d] = V
    qkv[0, 3] = beta  # q[0] = beta * x_hat[3]
    qkv[d, 0] = 1.0  # k[0] = x_hat[0] + gamma_k * x_hat[3]
    qkv[d, 3] = gamma_k

    for name in ("blocks.0.ln1.weight", "blocks.0.ln2.weight", "norm.weight"):
        w[name][:] = 1.0
    return cfg, WeightStore({n: Tensor(a, dtype="f64") for n, a in w.items()}, cfg)


def gen_square_dataset(dirpath: Path, n: int = 50, seed: int = 7,
                       square: int = 32) -> list[dict]:
    """PPM images with one bright square on a dark background, offset so that
    exactly one 16x16 patch is fully covered; annotation box is the square."""
    dirpath.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    size = 224
    for i in range(n):
        img = np.zeros((size, size, 3), dtype=np.uint8)
        # top-left corner at 8 mod 16 keeps one patch fully inside the square
        gx = rng.integers(0, (size - square) // 16 - 1)
        gy = rng.integers(0, (size - square) // 16 - 1)
        x0, y0 = int(gx * 16 + 8), int(gy * 16 + 8)
        img[y0 : y0 + square, x0 : x0 + square, :] = 255
        name = f"img_{i:03d}.ppm"
        write_ppm(dirpath / name, img)
        records.append({"image": name, "box": [x0, y0, x0 + square, y0 + square], "positive": True})
    with open(dirpath / "annotations.jsonl", "w") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")
    return records
