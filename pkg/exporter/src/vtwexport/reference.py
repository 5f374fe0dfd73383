"""Reference forward pass in torch with attention capture.

Recomputes the standard pre-norm ViT from a torchvision state_dict using the
functional API so the per-layer post-softmax attention is an explicit tensor
(torchvision's fused attention never materializes it).  Logits must agree
with ``torchvision.models.VisionTransformer`` to float32 noise; the test
suite asserts it.  Gradients of the attention tensors come from torch
autograd, giving an engine-independent reference for the relevance method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .mapping import ExportConfig

LN_EPS = 1e-6


@dataclass
class ReferenceOutputs:
    logits: torch.Tensor  # [num_classes]
    attention: list[torch.Tensor]  # depth x [1, heads, T, T], grads retained if keep_graph
    features: torch.Tensor  # [T, D] last block output (pre final-LN)

    def attention_maps(self) -> list[torch.Tensor]:
        return [a[0].detach() for a in self.attention]


def reference_forward(
    state: dict[str, torch.Tensor], cfg: ExportConfig, x: torch.Tensor,
    keep_graph: bool = False,
) -> ReferenceOutputs:
    """x: [3, S, S] preprocessed image."""
    d, nh = cfg.embed_dim, cfg.heads
    hd = d // nh
    ps = cfg.patch_size
    t = cfg.tokens

    tok = F.conv2d(x.unsqueeze(0), state["conv_proj.weight"], state["conv_proj.bias"], stride=ps)
    tok = tok.reshape(1, d, -1).permute(0, 2, 1)  # [1, P, D]
    tok = torch.cat([state["class_token"], tok], dim=1) + state["encoder.pos_embedding"]

    attns: list[torch.Tensor] = []
    for i in range(cfg.depth):
        p = f"encoder.layers.encoder_layer_{i}."
        h = F.layer_norm(tok, (d,), state[p + "ln_1.weight"], state[p + "ln_1.bias"], eps=LN_EPS)
        qkv = F.linear(h, state[p + "self_attention.in_proj_weight"],
                       state[p + "self_attention.in_proj_bias"])
        q, k, v = qkv.chunk(3, dim=-1)
        q = q.reshape(1, t, nh, hd).transpose(1, 2)
        k = k.reshape(1, t, nh, hd).transpose(1, 2)
        v = v.reshape(1, t, nh, hd).transpose(1, 2)
        attn = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(hd), dim=-1)
        if keep_graph:
            attn.retain_grad()
        attns.append(attn)
        ctx = (attn @ v).transpose(1, 2).reshape(1, t, d)
        tok = tok + F.linear(ctx, state[p + "self_attention.out_proj.weight"],
                             state[p + "self_attention.out_proj.bias"])
        h2 = F.layer_norm(tok, (d,), state[p + "ln_2.weight"], state[p + "ln_2.bias"], eps=LN_EPS)
        mid = F.gelu(F.linear(h2, state[p + "mlp.0.weight"], state[p + "mlp.0.bias"]))
        tok = tok + F.linear(mid, state[p + "mlp.3.weight"], state[p + "mlp.3.bias"])

    features = tok
    normed = F.layer_norm(features, (d,), state["encoder.ln.weight"], state["encoder.ln.bias"],
                          eps=LN_EPS)
    logits = F.linear(normed[:, 0], state["heads.head.weight"], state["heads.head.bias"])[0]
    return ReferenceOutputs(logits=logits, attention=attns, features=features[0])


def reference_chefer(
    state: dict[str, torch.Tensor], cfg: ExportConfig, x: torch.Tensor, class_index: int
) -> torch.Tensor:
    """Relevance grid [G, G] with attention gradients from torch autograd."""
    sd = {k: v.detach() for k, v in state.items()}
    out = reference_forward(sd, cfg, x.detach().requires_grad_(True), keep_graph=True)
    out.logits[class_index].backward()
    t = cfg.tokens
    r = torch.eye(t, dtype=torch.float64)
    for a in out.attention:
        grad = a.grad if a.grad is not None else torch.zeros_like(a)
        abar = torch.clamp(grad[0].double() * a[0].detach().double(), min=0).mean(dim=0)
        r = r + abar @ r
    g = cfg.image_size // cfg.patch_size
    return r[0, 1:].reshape(g, g)
