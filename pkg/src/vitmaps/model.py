"""ViT-B/16-compatible forward pass with attention capture and a
class-conditioned backward pass.

The block layout is the standard pre-norm ViT: patchify -> linear embed ->
prepend [cls] -> add positional embeddings -> depth x (LN, MHSA, residual;
LN, MLP, residual) -> final LN -> linear head on the [cls] token.  Post-softmax
attention matrices are captured per layer; ``backward_class`` fills in their
gradients with respect to a selected logit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ImageFormatError, ShapeError, StateError, WeightFormatError
from .resample import bilinear_resize
from .tensor import Tape, Tensor
from .vtw import read_vtw

log = logging.getLogger(__name__)

# Common natural-image statistics; the originating preprocessing is not fixed
# by any checkpoint we load, so these are defaults, overridable per run.
DEFAULT_MEAN = (0.485, 0.456, 0.406)
DEFAULT_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class ViTConfig:
    image_size: int = 224
    patch_size: int = 16
    embed_dim: int = 768
    depth: int = 12
    heads: int = 12
    mlp_ratio: float = 4.0
    num_classes: int = 2

    def __post_init__(self):
        if self.image_size % self.patch_size != 0:
            raise ValueError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}"
            )
        if self.embed_dim % self.heads != 0:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if min(self.image_size, self.patch_size, self.embed_dim, self.depth, self.heads,
               self.num_classes) < 1 or self.mlp_ratio <= 0:
            raise ValueError("all config dimensions must be positive")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid * self.grid

    @property
    def tokens(self) -> int:
        return self.num_patches + 1

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads

    @property
    def mlp_dim(self) -> int:
        return int(self.embed_dim * self.mlp_ratio)


def canonical_shapes(config: ViTConfig) -> dict[str, tuple[int, ...]]:
    """Expected name -> shape table for a checkpoint (torch Linear convention:
    weight is (out_features, in_features))."""
    d, t, m, c = config.embed_dim, config.tokens, config.mlp_dim, config.num_classes
    pv = 3 * config.patch_size * config.patch_size
    shapes: dict[str, tuple[int, ...]] = {
        "patch_embed.weight": (d, pv),
        "patch_embed.bias": (d,),
        "cls_token": (1, d),
        "pos_embed": (t, d),
        "norm.weight": (d,),
        "norm.bias": (d,),
        "head.weight": (c, d),
        "head.bias": (c,),
    }
    for layer in range(config.depth):
        p = f"blocks.{layer}."
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


def parameter_count(config: ViTConfig) -> int:
    return sum(math.prod(s) for s in canonical_shapes(config).values())


class WeightStore:
    """Named parameter tensors validated against a config."""

    def __init__(self, tensors: dict[str, Tensor], config: ViTConfig):
        expected = canonical_shapes(config)
        missing = sorted(set(expected) - set(tensors))
        if missing:
            raise WeightFormatError(f"missing tensors: {', '.join(missing)}")
        for name, shape in expected.items():
            got = tensors[name].shape
            if tuple(got) != shape:
                raise WeightFormatError(
                    f"tensor {name!r} has shape {tuple(got)}, expected {shape}"
                )
        extras = sorted(set(tensors) - set(expected))
        if extras:
            log.warning("ignoring %d unexpected tensors: %s", len(extras), ", ".join(extras))
        self.config = config
        self._tensors = {name: tensors[name] for name in expected}

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def names(self) -> list[str]:
        return sorted(self._tensors)

    @property
    def dtype(self) -> str:
        return next(iter(self._tensors.values())).dtype

    def astype(self, dtype: str) -> "WeightStore":
        if dtype == self.dtype:
            return self
        return WeightStore(
            {k: v.astype(dtype) for k, v in self._tensors.items()}, self.config
        )


def load_weights(path, config: ViTConfig, dtype: str = "f32") -> WeightStore:
    """Load and validate a VTW file; cast to ``dtype``."""
    raw = read_vtw(path)
    tensors = {name: Tensor(arr, dtype="f32") for name, arr in raw.items()}
    return WeightStore(tensors, config).astype(dtype)


@dataclass(frozen=True)
class CoordTransform:
    """Mapping from original-image pixel coordinates into the model frame."""

    src_w: int
    src_h: int
    dst: int

    def scale_box(self, x0: int, y0: int, x1: int, y1: int) -> tuple[int, int, int, int]:
        """Map a half-open pixel box; keeps it non-empty and inside the frame."""
        nx0 = max(0, min(self.dst - 1, math.floor(x0 * self.dst / self.src_w)))
        ny0 = max(0, min(self.dst - 1, math.floor(y0 * self.dst / self.src_h)))
        nx1 = max(nx0 + 1, min(self.dst, math.ceil(x1 * self.dst / self.src_w)))
        ny1 = max(ny0 + 1, min(self.dst, math.ceil(y1 * self.dst / self.src_h)))
        return nx0, ny0, nx1, ny1


def preprocess(
    image: np.ndarray,
    config: ViTConfig,
    mean: tuple[float, float, float] = DEFAULT_MEAN,
    std: tuple[float, float, float] = DEFAULT_STD,
    dtype: str = "f32",
) -> tuple[Tensor, CoordTransform]:
    """8-bit RGB (H, W, 3) -> normalized Tensor[3, S, S] plus the coordinate
    transform induced by the resize (for annotation rescaling)."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ImageFormatError(
            f"expected (H, W, 3) uint8 RGB input, got shape {image.shape} dtype {image.dtype}"
        )
    h, w = image.shape[:2]
    np_dtype = np.float32 if dtype == "f32" else np.float64
    chw = image.astype(np_dtype).transpose(2, 0, 1) / np_dtype(255)
    s = config.image_size
    if (h, w) != (s, s):
        chw = bilinear_resize(chw, s, s)
    mean_a = np.asarray(mean, dtype=np_dtype).reshape(3, 1, 1)
    std_a = np.asarray(std, dtype=np_dtype).reshape(3, 1, 1)
    out = (chw - mean_a) / std_a
    return Tensor(out, dtype=dtype), CoordTransform(src_w=w, src_h=h, dst=s)


@dataclass
class CaptureSet:
    """Per-layer post-softmax attention plus everything backward needs."""

    config: ViTConfig
    attention: list[Tensor]  # depth x [heads, T, T]
    final_block_features: Tensor  # [T, D], output of the last block (pre final-LN)
    logits: Tensor  # [num_classes]
    input: Tensor  # [3, S, S] preprocessed image
    tape: Tape | None = None
    attention_grad: list[Tensor] | None = None
    final_block_features_grad: Tensor | None = None
    input_grad: Tensor | None = None
    class_index: int | None = None

    @property
    def has_backward(self) -> bool:
        return self.attention_grad is not None


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return T.add_bias(T.matmul(x, T.transpose(w)), b)


def forward_with_capture(
    x: Tensor,
    weights: WeightStore,
    config: ViTConfig | None = None,
    attention_override: dict[int, Tensor] | None = None,
) -> tuple[Tensor, CaptureSet]:
    """Run the ViT on one preprocessed image, recording attention per layer.

    ``attention_override`` substitutes the given tensor for layer l's
    post-softmax attention; used to verify d(logit)/dA against finite
    differences, where A must act as an independent input.
    """
    cfg = config or weights.config
    s = cfg.image_size
    if x.shape != (3, s, s):
        raise ShapeError(f"input shape {x.shape} does not match config ({3}, {s}, {s})")
    if x.dtype != weights.dtype:
        raise ShapeError(f"input dtype {x.dtype} != weight dtype {weights.dtype}")
    ps, g, d, nh, hd = cfg.patch_size, cfg.grid, cfg.embed_dim, cfg.heads, cfg.head_dim
    t_total = cfg.tokens
    attn_scale = 1.0 / math.sqrt(hd)
    override = attention_override or {}

    tape = Tape()
    attentions: list[Tensor] = []
    with tape:
        # patchify: [3,S,S] -> [P, 3*ps*ps], row-major patch order, channel-major pixels
        p5 = T.reshape(x, (3, g, ps, g, ps))
        patches = T.reshape(T.transpose(p5, (1, 3, 0, 2, 4)), (cfg.num_patches, 3 * ps * ps))
        tokens = _linear(patches, weights["patch_embed.weight"], weights["patch_embed.bias"])
        tokens = T.concat([weights["cls_token"], tokens], axis=0)
        tokens = T.add(tokens, weights["pos_embed"])

        for layer in range(cfg.depth):
            p = f"blocks.{layer}."
            h = T.layernorm(tokens, weights[p + "ln1.weight"], weights[p + "ln1.bias"])
            qkv = _linear(h, weights[p + "attn.qkv.weight"], weights[p + "attn.qkv.bias"])
            q = T.slice_axis(qkv, 1, 0, d)
            k = T.slice_axis(qkv, 1, d, 2 * d)
            v = T.slice_axis(qkv, 1, 2 * d, 3 * d)
            # [T, D] -> [heads, T, head_dim]
            q = T.transpose(T.reshape(q, (t_total, nh, hd)), (1, 0, 2))
            k = T.transpose(T.reshape(k, (t_total, nh, hd)), (1, 0, 2))
            v = T.transpose(T.reshape(v, (t_total, nh, hd)), (1, 0, 2))
            scores = T.scale(T.matmul(q, T.transpose(k, (0, 2, 1))), attn_scale)
            attn = override.get(layer)
            if attn is None:
                attn = T.softmax_lastaxis(scores)
            attentions.append(attn)
            ctx = T.matmul(attn, v)  # [heads, T, head_dim]
            ctx = T.reshape(T.transpose(ctx, (1, 0, 2)), (t_total, d))
            ctx = _linear(ctx, weights[p + "attn.proj.weight"], weights[p + "attn.proj.bias"])
            tokens = T.add(tokens, ctx)

            h2 = T.layernorm(tokens, weights[p + "ln2.weight"], weights[p + "ln2.bias"])
            mid = T.gelu(_linear(h2, weights[p + "mlp.fc1.weight"], weights[p + "mlp.fc1.bias"]))
            mlp_out = _linear(mid, weights[p + "mlp.fc2.weight"], weights[p + "mlp.fc2.bias"])
            tokens = T.add(tokens, mlp_out)

        features = tokens  # output of the final block, before the final LN
        normed = T.layernorm(features, weights["norm.weight"], weights["norm.bias"])
        cls_final = T.slice_axis(normed, 0, 0, 1)
        logits2d = _linear(cls_final, weights["head.weight"], weights["head.bias"])
        logits = T.reshape(logits2d, (cfg.num_classes,))

    captures = CaptureSet(
        config=cfg,
        attention=attentions,
        final_block_features=features,
        logits=logits,
        input=x,
        tape=tape,
    )
    return logits, captures


def backward_class(captures: CaptureSet, weights: WeightStore, class_index: int) -> CaptureSet:
    """Fill d(logits[class_index])/d(attention, features, input) into ``captures``."""
    if captures.tape is None:
        raise StateError("backward_class requires captures produced by forward_with_capture")
    num_classes = weights.config.num_classes
    if not 0 <= class_index < num_classes:
        raise ValueError(f"class_index {class_index} out of range [0, {num_classes})")
    seed = np.zeros(captures.logits.shape, dtype=np.float32 if captures.logits.dtype == "f32" else np.float64)
    seed[class_index] = 1.0
    wrt = list(captures.attention) + [captures.final_block_features, captures.input]
    grads = captures.tape.gradients(captures.logits, Tensor(seed, dtype=captures.logits.dtype), wrt)
    captures.attention_grad = grads[: len(captures.attention)]
    captures.final_block_features_grad = grads[-2]
    captures.input_grad = grads[-1]
    captures.class_index = class_index
    return captures
