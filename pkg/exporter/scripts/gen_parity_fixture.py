"""Regenerates the parity fixture committed under the engine's test suite
(tests/fixtures/parity).  Deterministic: fixed seeds, fixed tiny config.

Usage: python exporter/scripts/gen_parity_fixture.py [out_dir]
"""

import sys
from pathlib import Path

import torch
from torchvision.models.vision_transformer import VisionTransformer

from vtwexport import ExportConfig, emit_parity_fixture, export

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("tests/fixtures/parity")

CFG = ExportConfig(image_size=32, patch_size=8, embed_dim=16, depth=2, heads=2, num_classes=2)


def main() -> None:
    torch.manual_seed(20240731)
    model = VisionTransformer(image_size=32, patch_size=8, num_layers=2, num_heads=2,
                              hidden_dim=16, mlp_dim=64, num_classes=2).eval()
    torch.nn.init.normal_(model.heads.head.weight, std=0.2)
    torch.nn.init.normal_(model.heads.head.bias, std=0.2)
    sd = model.state_dict()

    OUT.mkdir(parents=True, exist_ok=True)
    export(sd, CFG, OUT / "model.vtw", source="torchvision VisionTransformer tiny, seed 20240731")
    inputs = [torch.randn(3, 32, 32) for _ in range(3)]
    for i, x in enumerate(inputs):
        with torch.no_grad():
            from vtwexport import reference_forward

            logits = reference_forward(sd, CFG, x).logits
        margin = float((logits[0] - logits[1]).abs())
        assert margin > 1e-2, f"sample {i}: near-tied logits (margin {margin:.1e}), pick a new seed"
    emit_parity_fixture(sd, CFG, inputs, OUT, source="tiny reference model, seed 20240731")
    print(f"fixture written to {OUT}")


if __name__ == "__main__":
    main()
