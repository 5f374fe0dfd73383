"""Torch checkpoint -> VTW exporter with parity-fixture generation."""

__version__ = "0.1.0"

from .export import ExportError, export, load_checkpoint
from .fixtures import emit_parity_fixture, preprocess_image, read_fixture
from .mapping import ExportConfig, canonical_shapes, torchvision_mapping
from .reference import reference_chefer, reference_forward
from .vtwio import read_vtw, write_vtw

__all__ = [
    "ExportConfig",
    "ExportError",
    "canonical_shapes",
    "emit_parity_fixture",
    "export",
    "load_checkpoint",
    "preprocess_image",
    "read_fixture",
    "read_vtw",
    "reference_chefer",
    "reference_forward",
    "torchvision_mapping",
    "write_vtw",
]
