"""Checkpoint conversion: round-trips, determinism, mapping validation."""

import numpy as np
import pytest
import torch
from torchvision.models.vision_transformer import VisionTransformer

from vtwexport import (
    ExportConfig,
    ExportError,
    canonical_shapes,
    export,
    load_checkpoint,
    read_vtw,
    torchvision_mapping,
)

CFG = ExportConfig(image_size=32, patch_size=8, embed_dim=16, depth=2, heads=2, num_classes=2)


def tiny_model(seed=0) -> VisionTransformer:
    torch.manual_seed(seed)
    m = VisionTransformer(image_size=32, patch_size=8, num_layers=2, num_heads=2,
                          hidden_dim=16, mlp_dim=64, num_classes=2).eval()
    # torchvision zero-inits the head; give it a real two-class head
    torch.nn.init.normal_(m.heads.head.weight, std=0.2)
    torch.nn.init.normal_(m.heads.head.bias, std=0.2)
    return m


def test_export_roundtrip_preserves_tensors_bitwise(tmp_path):
    sd = tiny_model().state_dict()
    out = tmp_path / "m.vtw"
    export(sd, CFG, out)
    back = read_vtw(out)
    mapping = torchvision_mapping(CFG.depth)
    assert sorted(back) == sorted(canonical_shapes(CFG))
    for src, dst in mapping.items():
        expected = sd[src].numpy().astype(np.float32).reshape(back[dst].shape)
        assert back[dst].tobytes() == expected.tobytes(), dst


def test_primary_loader_accepts_export(tmp_path):
    vitmaps = pytest.importorskip("vitmaps")
    sd = tiny_model(seed=1).state_dict()
    out = tmp_path / "m.vtw"
    export(sd, CFG, out)
    cfg = vitmaps.ViTConfig(image_size=32, patch_size=8, embed_dim=16, depth=2, heads=2)
    ws = vitmaps.load_weights(out, cfg)
    assert ws.names() == sorted(canonical_shapes(CFG))
    for name, shape in canonical_shapes(CFG).items():
        assert ws[name].shape == shape


def test_reexport_identical_content_hash(tmp_path):
    sd = tiny_model(seed=2).state_dict()
    m1 = export(sd, CFG, tmp_path / "a.vtw")
    m2 = export(sd, CFG, tmp_path / "b.vtw")
    assert m1["content_hash"] == m2["content_hash"]
    assert (tmp_path / "a.vtw").read_bytes() == (tmp_path / "b.vtw").read_bytes()


def test_missing_head_raises_naming_it(tmp_path):
    sd = tiny_model().state_dict()
    del sd["heads.head.weight"]
    with pytest.raises(ExportError, match="head.weight"):
        export(sd, CFG, tmp_path / "m.vtw")


def test_mapping_must_cover_every_canonical_name(tmp_path):
    sd = tiny_model().state_dict()
    mapping = torchvision_mapping(CFG.depth)
    del mapping["encoder.ln.weight"]
    with pytest.raises(ExportError, match="norm.weight"):
        export(sd, CFG, tmp_path / "m.vtw", mapping=mapping)


def test_mapping_duplicate_target_rejected(tmp_path):
    sd = tiny_model().state_dict()
    mapping = torchvision_mapping(CFG.depth)
    mapping["encoder.ln.bias"] = "norm.weight"  # collides
    with pytest.raises(ExportError, match="more than once"):
        export(sd, CFG, tmp_path / "m.vtw", mapping=mapping)


def test_element_count_mismatch_names_tensor(tmp_path):
    sd = tiny_model().state_dict()
    sd["encoder.pos_embedding"] = torch.zeros(1, 3, 16)
    with pytest.raises(ExportError, match="pos_embed"):
        export(sd, CFG, tmp_path / "m.vtw")


def test_manifest_written_with_config_and_mapping(tmp_path):
    import json

    sd = tiny_model().state_dict()
    out = tmp_path / "m.vtw"
    export(sd, CFG, out, source="unit-test")
    manifest = json.loads((tmp_path / "m.vtw.manifest.json").read_text())
    assert manifest["source"] == "unit-test"
    assert manifest["config"]["embed_dim"] == 16
    assert manifest["content_hash"].startswith("sha256:")
    assert set(manifest["mapping"].values()) == set(canonical_shapes(CFG))


def test_load_checkpoint_from_file(tmp_path):
    sd = tiny_model(seed=3).state_dict()
    ckpt = tmp_path / "model.pth"
    torch.save(sd, ckpt)
    loaded = load_checkpoint(ckpt)
    assert sorted(loaded) == sorted(sd)
    export(loaded, CFG, tmp_path / "m.vtw")
