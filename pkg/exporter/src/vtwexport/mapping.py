"""Canonical VTW tensor names and the torchvision name mapping."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ExportConfig:
    image_size: int = 224
    patch_size: int = 16
    embed_dim: int = 768
    depth: int = 12
    heads: int = 12
    mlp_ratio: float = 4.0
    num_classes: int = 2

    @property
    def tokens(self) -> int:
        return (self.image_size // self.patch_size) ** 2 + 1

    @property
    def mlp_dim(self) -> int:
        return int(self.embed_dim * self.mlp_ratio)


def canonical_shapes(cfg: ExportConfig) -> dict[str, tuple[int, ...]]:
    d, t, m, c = cfg.embed_dim, cfg.tokens, cfg.mlp_dim, cfg.num_classes
    pv = 3 * cfg.patch_size * cfg.patch_size
    shapes = {
        "patch_embed.weight": (d, pv),
        "patch_embed.bias": (d,),
        "cls_token": (1, d),
        "pos_embed": (t, d),
        "norm.weight": (d,),
        "norm.bias": (d,),
        "head.weight": (c, d),
        "head.bias": (c,),
    }
    for i in range(cfg.depth):
        p = f"blocks.{i}."
        shapes[p + "ln1.weight"] = (d,)
        shapes[p + "ln1.bias"] = (d,)
        shapes[p + "attn.qkv.weight"] = (3 * d, d)
        shapes[p + "attn.qkv.bias"] = (3 * d,)
        shapes[p + "attn.proj.weight"] = (d, d)
        shapes[p + "attn.proj.bias"] = (d,)
        shapes[p + "ln2.weight"] = (d,)
        shapes[p + "ln2.bias"] = (d,)
        shapes[p + "mlp.fc1.weight"] = (m, d)
        shapes[p + "mlp.fc1.bias"] = (m,)
        shapes[p + "mlp.fc2.weight"] = (d, m)
        shapes[p + "mlp.fc2.bias"] = (d,)
    return shapes


def torchvision_mapping(depth: int) -> dict[str, str]:
    """source (torchvision VisionTransformer state_dict) -> canonical name."""
    m = {
        "class_token": "cls_token",
        "conv_proj.weight": "patch_embed.weight",
        "conv_proj.bias": "patch_embed.bias",
        "encoder.pos_embedding": "pos_embed",
        "encoder.ln.weight": "norm.weight",
        "encoder.ln.bias": "norm.bias",
        "heads.head.weight": "head.weight",
        "heads.head.bias": "head.bias",
    }
    for i in range(depth):
        src = f"encoder.layers.encoder_layer_{i}."
        dst = f"blocks.{i}."
        m[src + "ln_1.weight"] = dst + "ln1.weight"
        m[src + "ln_1.bias"] = dst + "ln1.bias"
        m[src + "self_attention.in_proj_weight"] = dst + "attn.qkv.weight"
        m[src + "self_attention.in_proj_bias"] = dst + "attn.qkv.bias"
        m[src + "self_attention.out_proj.weight"] = dst + "attn.proj.weight"
        m[src + "self_attention.out_proj.bias"] = dst + "attn.proj.bias"
        m[src + "ln_2.weight"] = dst + "ln2.weight"
        m[src + "ln_2.bias"] = dst + "ln2.bias"
        m[src + "mlp.0.weight"] = dst + "mlp.fc1.weight"
        m[src + "mlp.0.bias"] = dst + "mlp.fc1.bias"
        m[src + "mlp.3.weight"] = dst + "mlp.fc2.weight"
        m[src + "mlp.3.bias"] = dst + "mlp.fc2.bias"
    return m
