"""Batch driver: evaluate | saliency | inspect-weights.

``evaluate`` walks a JSON-Lines annotation file, runs the requested saliency
methods over every image, and writes a per-sample CSV plus a summary JSON.
Records that fail (missing image, undecodable file) are reported and skipped;
the run fails only when nothing succeeds.  Output bytes are deterministic for
a fixed config, independent of --jobs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ImageFormatError, ShapeError, StateError, WeightFormatError
from .eval import AnnotationBox, EvalResult, aggregate, evaluate_sample, threshold_top_percentile, tightest_bbox
from .imageio import read_image, write_pgm16, write_raw_grid
from .model import (
    DEFAULT_MEAN,
    DEFAULT_STD,
    ViTConfig,
    WeightStore,
    backward_class,
    canonical_shapes,
    forward_with_capture,
    load_weights,
    parameter_count,
    preprocess,
)
from .saliency import METHODS, compute_map
from .vtw import read_manifest

log = logging.getLogger(__name__)

CSV_HEADER = "image,method,init,hit,iou,argmax_row,argmax_col,pred_box,gt_box"


@dataclass
class AnnotationRecord:
    image: str
    box: AnnotationBox
    positive: bool = True


@dataclass
class RunConfig:
    weights: Path
    data_dir: Path
    annotations: Path
    out_dir: Path
    methods: tuple[str, ...] = METHODS
    class_policy: str = "1"  # "predicted" or a fixed class index
    k: float = 5.0
    head_agg: str = "mean"
    mean: tuple[float, float, float] = DEFAULT_MEAN
    std: tuple[float, float, float] = DEFAULT_STD
    jobs: int = 1
    dtype: str = "f32"
    init_label: str = ""
    mask_iou: bool = False
    config_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.methods:
            raise ValueError("methods subset must be non-empty")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}; choose from {METHODS}")
        if not 0 < self.k < 100:
            raise ValueError(f"k must be in (0, 100), got {self.k}")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")


def _load_annotations(path: Path) -> list[AnnotationRecord]:
    records = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            x0, y0, x1, y1 = obj["box"]
            records.append(
                AnnotationRecord(
                    image=obj["image"],
                    box=AnnotationBox(x0=x0, y0=y0, x1=x1, y1=y1, frame="original"),
                    positive=bool(obj.get("positive", True)),
                )
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"{path}:{lineno}: bad annotation record: {exc}") from exc
    if not records:
        raise ValueError(f"{path}: no annotation records")
    return records


def _select_class(policy: str, logits: np.ndarray) -> int:
    if policy == "predicted":
        return int(np.argmax(logits))
    return int(policy)


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _box_str(box: AnnotationBox) -> str:
    return ":".join(str(c) for c in box.as_tuple())


def _evaluate_record(
    record: AnnotationRecord, run: RunConfig, config: ViTConfig, weights: WeightStore
) -> list[EvalResult]:
    image = read_image(run.data_dir / record.image)
    x, transform = preprocess(image, config, mean=run.mean, std=run.std, dtype=run.dtype)
    logits, captures = forward_with_capture(x, weights, config)
    target = _select_class(run.class_policy, logits.array)
    if any(m in run.methods for m in ("gradcam", "chefer")):
        backward_class(captures, weights, target)
    gt = AnnotationBox(*transform.scale_box(*record.box.as_tuple()), frame="model")
    results = []
    for method in run.methods:
        smap = compute_map(captures, method, head_agg=run.head_agg)
        results.append(
            evaluate_sample(
                smap.pixels, gt, k=run.k,
                image_id=record.image, method=method, mask_iou=run.mask_iou,
            )
        )
    return results


def cli_evaluate(run: RunConfig) -> int:
    config = ViTConfig(**run.config_overrides)
    try:
        weights = load_weights(run.weights, config, dtype=run.dtype)
    except (WeightFormatError, OSError) as exc:
        log.error("cannot load weights: %s", exc)
        return 1
    records = _load_annotations(run.annotations)
    init = run.init_label or run.weights.stem

    def work(record: AnnotationRecord):
        try:
            return _evaluate_record(record, run, config, weights), None
        except (OSError, ImageFormatError, ShapeError, StateError, ValueError) as exc:
            return None, f"{record.image}: {exc}"

    if run.jobs == 1:
        outcomes = [work(r) for r in records]
    else:
        with ThreadPoolExecutor(max_workers=run.jobs) as pool:
            outcomes = list(pool.map(work, records))

    results: list[EvalResult] = []
    errors: list[str] = []
    for per_record, err in outcomes:
        if err is not None:
            errors.append(err)
            log.warning("record failed: %s", err)
        else:
            results.extend(per_record)
    if not results:
        log.error("no record evaluated successfully (%d errors)", len(errors))
        return 1
    # IoU is rounded to the CSV's 6 significant digits before aggregation so the
    # summary equals an independent recomputation from the CSV exactly
    results = [dataclasses.replace(r, iou=float(_fmt(r.iou))) for r in results]

    run.out_dir.mkdir(parents=True, exist_ok=True)
    csv_lines = [CSV_HEADER]
    for r in results:
        csv_lines.append(
            ",".join(
                [
                    r.image_id,
                    r.method,
                    init,
                    str(int(r.hit)),
                    _fmt(r.iou),
                    str(r.argmax[0]),
                    str(r.argmax[1]),
                    _box_str(r.predicted_box),
                    _box_str(r.gt_box),
                ]
            )
        )
    (run.out_dir / "results.csv").write_text("\n".join(csv_lines) + "\n")

    summary = {
        "run": {
            "weights": str(run.weights),
            "init": init,
            "methods": list(run.methods),
            "class_policy": run.class_policy,
            "k": run.k,
            "head_agg": run.head_agg,
            "dtype": run.dtype,
            "iou_mode": "mask-vs-box" if run.mask_iou else "box-vs-box",
            "n_records": len(records),
            "n_failed": len(errors),
        },
        "methods": {m: s.to_dict() for m, s in aggregate(results).items()},
        "errors": errors,
    }
    (run.out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0


def cli_saliency(
    image_path: Path,
    weights_path: Path,
    method: str,
    out_dir: Path,
    class_policy: str = "1",
    head_agg: str = "mean",
    k: float = 5.0,
    mean: tuple[float, float, float] = DEFAULT_MEAN,
    std: tuple[float, float, float] = DEFAULT_STD,
    dtype: str = "f32",
    config_overrides: dict | None = None,
) -> int:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")
    config = ViTConfig(**(config_overrides or {}))
    weights = load_weights(weights_path, config, dtype=dtype)
    image = read_image(image_path)
    x, _ = preprocess(image, config, mean=mean, std=std, dtype=dtype)
    logits, captures = forward_with_capture(x, weights, config)
    target = _select_class(class_policy, logits.array)
    if method in ("gradcam", "chefer"):
        backward_class(captures, weights, target)
    smap = compute_map(captures, method, head_agg=head_agg)

    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{image_path.stem}_{method}"
    write_pgm16(out_dir / f"{stem}.pgm", smap.pixels)
    write_raw_grid(out_dir / f"{stem}.f32", smap.grid, method)

    flat = int(np.argmax(smap.pixels))
    row, col = divmod(flat, smap.pixels.shape[1])
    pred = tightest_bbox(threshold_top_percentile(smap.pixels, k=k).grid)
    print(f"method={method} class={target} argmax=({row},{col}) top{_fmt(k)}pct_box={_box_str(pred)}")
    return 0


def cli_inspect_weights(path: Path, config_overrides: dict | None = None, validate: bool = False) -> int:
    entries = read_manifest(path)
    total = 0
    print(f"{'name':50s} {'dtype':6s} shape")
    for e in sorted(entries, key=lambda e: e["name"]):
        n = int(np.prod(e["shape"])) if e["shape"] else 1
        total += n
        print(f"{e['name']:50s} {e['dtype']:6s} {tuple(e['shape'])}")
    print(f"total parameters: {total}")
    if validate:
        config = ViTConfig(**(config_overrides or {}))
        expected = canonical_shapes(config)
        problems = []
        by_name = {e["name"]: tuple(e["shape"]) for e in entries}
        for name, shape in expected.items():
            if name not in by_name:
                problems.append(f"missing {name}")
            elif by_name[name] != shape:
                problems.append(f"{name}: shape {by_name[name]} != expected {shape}")
        for p in problems:
            print(f"MISMATCH: {p}")
        print(f"expected parameters for config: {parameter_count(config)}")
        if problems:
            return 1
        print("manifest matches config")
    return 0


def _parse_triple(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated floats, got {text!r}")
    return tuple(parts)


def _read_config_overrides(path: str | None) -> dict:
    if not path:
        return {}
    obj = json.loads(Path(path).read_text())
    if not isinstance(obj, dict):
        raise ValueError(f"{path}: config overrides must be a JSON object")
    return obj


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vitmaps", description=__doc__)
    ap.add_argument("--version", action="version", version=f"vitmaps {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("evaluate", help="run methods over an annotated dataset")
    ev.add_argument("--weights", required=True, type=Path)
    ev.add_argument("--config", help="JSON file with model config overrides")
    ev.add_argument("--data-dir", required=True, type=Path)
    ev.add_argument("--annotations", required=True, type=Path)
    ev.add_argument("--methods", default=",".join(METHODS), help="comma-separated subset")
    ev.add_argument("--class", dest="class_policy", default="1", choices=["predicted", "0", "1"])
    ev.add_argument("--k", type=float, default=5.0)
    ev.add_argument("--head-agg", default="mean")
    ev.add_argument("--mean", type=_parse_triple, default=DEFAULT_MEAN)
    ev.add_argument("--std", type=_parse_triple, default=DEFAULT_STD)
    ev.add_argument("--out", required=True, type=Path)
    ev.add_argument("--jobs", type=int, default=1)
    ev.add_argument("--dtype", default="f32", choices=["f32", "f64"])
    ev.add_argument("--init", default="", help="initialization label for the CSV (default: weights stem)")
    ev.add_argument("--mask-iou", action="store_true", help="mask-vs-box IoU instead of box-vs-box")

    sa = sub.add_parser("saliency", help="dump maps for one image")
    sa.add_argument("--weights", required=True, type=Path)
    sa.add_argument("--config")
    sa.add_argument("--image", required=True, type=Path)
    sa.add_argument("--method", required=True)
    sa.add_argument("--class", dest="class_policy", default="1", choices=["predicted", "0", "1"])
    sa.add_argument("--k", type=float, default=5.0)
    sa.add_argument("--head-agg", default="mean")
    sa.add_argument("--mean", type=_parse_triple, default=DEFAULT_MEAN)
    sa.add_argument("--std", type=_parse_triple, default=DEFAULT_STD)
    sa.add_argument("--dtype", default="f32", choices=["f32", "f64"])
    sa.add_argument("--out", required=True, type=Path)

    iw = sub.add_parser("inspect-weights", help="list a weight file's manifest")
    iw.add_argument("--weights", required=True, type=Path)
    iw.add_argument("--config", help="validate the manifest against this config")

    return ap


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "evaluate":
            run = RunConfig(
                weights=args.weights,
                data_dir=args.data_dir,
                annotations=args.annotations,
                out_dir=args.out,
                methods=tuple(m.strip() for m in args.methods.split(",") if m.strip()),
                class_policy=args.class_policy,
                k=args.k,
                head_agg=args.head_agg,
                mean=args.mean,
                std=args.std,
                jobs=args.jobs,
                dtype=args.dtype,
                init_label=args.init,
                mask_iou=args.mask_iou,
                config_overrides=_read_config_overrides(args.config),
            )
            return cli_evaluate(run)
        if args.command == "saliency":
            return cli_saliency(
                image_path=args.image,
                weights_path=args.weights,
                method=args.method,
                out_dir=args.out,
                class_policy=args.class_policy,
                head_agg=args.head_agg,
                k=args.k,
                mean=args.mean,
                std=args.std,
                dtype=args.dtype,
                config_overrides=_read_config_overrides(args.config),
            )
        if args.command == "inspect-weights":
            return cli_inspect_weights(
                args.weights,
                config_overrides=_read_config_overrides(args.config),
                validate=args.config is not None,
            )
    except (WeightFormatError, ImageFormatError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return 1
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
