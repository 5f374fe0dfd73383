"""vtw-export CLI: ``export`` a checkpoint to VTW, ``fixture`` a parity bundle."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .export import ExportError, export, load_checkpoint
from .fixtures import emit_parity_fixture, preprocess_image
from .mapping import ExportConfig


def _config_from(path: str | None) -> ExportConfig:
    if not path:
        return ExportConfig()
    return ExportConfig(**json.loads(Path(path).read_text()))


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="vtw-export", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("export", help="convert a torch checkpoint to VTW")
    ex.add_argument("--src", required=True, type=Path, help="torch state-dict file")
    ex.add_argument("--out", required=True, type=Path, help="output .vtw path")
    ex.add_argument("--map", type=Path, help="JSON {source: canonical} name mapping")
    ex.add_argument("--config", help="JSON model config (defaults to ViT-B/16, 2 classes)")

    fx = sub.add_parser("fixture", help="emit a parity fixture bundle")
    fx.add_argument("--src", required=True, type=Path)
    fx.add_argument("--image", required=True, type=Path, nargs="+")
    fx.add_argument("--out-dir", required=True, type=Path)
    fx.add_argument("--config")
    fx.add_argument("--no-chefer", action="store_true")

    args = ap.parse_args(argv)
    try:
        cfg = _config_from(args.config)
        state = load_checkpoint(args.src)
        if args.command == "export":
            mapping = json.loads(args.map.read_text()) if args.map else None
            manifest = export(state, cfg, args.out, mapping=mapping, source=str(args.src))
            print(f"wrote {args.out} ({manifest['content_hash']})")
        else:
            inputs = [preprocess_image(p, cfg) for p in args.image]
            meta = emit_parity_fixture(
                state, cfg, inputs, args.out_dir,
                source=str(args.src), with_chefer=not args.no_chefer,
            )
            print(f"wrote {len(meta['samples'])} samples to {args.out_dir}")
    except (ExportError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
