"""Annotation manifests and derivation of the fine-stage dataset.

Coarse annotations mark the whole pose region; fine annotations mark the
held object (and the mouth/finger context around it) in the same global
frame. The fine-stage training set is derived by cropping each coarse
region (annotated, or detected when a coarse model is supplied), mapping
the intersecting fine boxes into the crop frame, and dropping boxes that
lost too much of their area to clipping. No pixels are touched here; each
derived record carries the crop region and its transform so an external
tool can cut the actual image data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

from .cascade import PipelineConfig
from .detectors import DetectorHandle
from .geometry import (
    Box,
    CropTransform,
    DegenerateRegionError,
    expand_with_margin,
    make_crop_transform,
    nms_indices,
)
from .jsonl import read_jsonl, write_jsonl

MANIFEST_VERSION = 1

SPLITS = ("train", "val", "test")
PROVENANCES = ("manual", "derived")
SOURCE_ANNOTATION = "coarse_annotation"
SOURCE_DETECTION = "coarse_detection"

# Fine boxes keeping less than this fraction of their area after clipping
# to the crop region are dropped as label slivers.
DEFAULT_MIN_KEEP_FRACTION = 0.25


@dataclass(frozen=True)
class AnnotationRecord:
    item_id: str
    image_ref: str
    image_size: tuple[float, float]  # (width, height)
    coarse_boxes: tuple[Box, ...] = ()
    fine_boxes: tuple[Box, ...] = ()
    split: str = "train"
    provenance: str = "manual"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}, got {self.provenance!r}")
        w, h = self.image_size
        if w <= 0 or h <= 0:
            raise ValueError(f"image_size must be positive, got {self.image_size}")

    @property
    def image_bounds(self) -> Box:
        return Box(0.0, 0.0, float(self.image_size[0]), float(self.image_size[1]))

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "v": MANIFEST_VERSION,
            "item_id": self.item_id,
            "image_ref": self.image_ref,
            "image_size": [self.image_size[0], self.image_size[1]],
            "coarse_boxes": [b.to_list() for b in self.coarse_boxes],
            "fine_boxes": [b.to_list() for b in self.fine_boxes],
            "split": self.split,
            "provenance": self.provenance,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping[str, Any]) -> "AnnotationRecord":
        if int(d.get("v", 0)) != MANIFEST_VERSION:
            raise ValueError(f"unsupported annotation manifest version {d.get('v')!r}")
        size = d["image_size"]
        return cls(
            item_id=str(d["item_id"]),
            image_ref=str(d["image_ref"]),
            image_size=(float(size[0]), float(size[1])),
            coarse_boxes=tuple(Box.from_list(b) for b in d.get("coarse_boxes", [])),
            fine_boxes=tuple(Box.from_list(b) for b in d.get("fine_boxes", [])),
            split=str(d.get("split", "train")),
            provenance=str(d.get("provenance", "manual")),
        )


@dataclass(frozen=True)
class LintIssue:
    severity: str  # "error" | "warning"
    code: str
    item_id: str | None
    message: str

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "severity": self.severity,
            "code": self.code,
            "item_id": self.item_id,
            "message": self.message,
        }


@dataclass
class LintReport:
    issues: list[LintIssue] = field(default_factory=list)

    def add(self, severity: str, code: str, item_id: str | None, message: str) -> None:
        self.issues.append(LintIssue(severity, code, item_id, message))

    @property
    def errors(self) -> list[LintIssue]:
        return [i for i in self.issues if i.severity == "error"]

    @property
    def warnings(self) -> list[LintIssue]:
        return [i for i in self.issues if i.severity == "warning"]

    def is_clean(self) -> bool:
        return not self.issues

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "v": MANIFEST_VERSION,
            "error_count": len(self.errors),
            "warning_count": len(self.warnings),
            "issues": [i.to_json_dict() for i in self.issues],
        }

    def render_text(self) -> str:
        if self.is_clean():
            return "manifest clean: no issues\n"
        lines = [f"{i.severity.upper()} [{i.code}] {i.item_id or '-'}: {i.message}" for i in self.issues]
        lines.append(f"{len(self.errors)} error(s), {len(self.warnings)} warning(s)")
        return "\n".join(lines) + "\n"


def lint_manifest(rows: Iterable[Mapping[str, Any] | AnnotationRecord]) -> LintReport:
    """Check an annotation manifest: invalid rows, duplicate ids, orphan
    fine boxes, and the same image_ref appearing in more than one split."""
    report = LintReport()
    seen_ids: set[str] = set()
    splits_by_ref: dict[str, set[str]] = {}
    for pos, row in enumerate(rows):
        if isinstance(row, AnnotationRecord):
            rec = row
        else:
            try:
                rec = AnnotationRecord.from_json_dict(row)
            except (KeyError, ValueError, TypeError, IndexError) as exc:
                item = row.get("item_id") if isinstance(row, Mapping) else None
                report.add("error", "invalid-record", item and str(item), f"row {pos}: {exc}")
                continue
        if rec.item_id in seen_ids:
            report.add("error", "duplicate-item-id", rec.item_id, "item_id appears more than once")
        seen_ids.add(rec.item_id)
        splits_by_ref.setdefault(rec.image_ref, set()).add(rec.split)
        for fb in rec.fine_boxes:
            if not any(fb.intersect(cb) is not None for cb in rec.coarse_boxes):
                report.add(
                    "warning",
                    "orphan-fine-box",
                    rec.item_id,
                    f"fine box {fb.to_list()} intersects no coarse box",
                )
    for ref, splits in sorted(splits_by_ref.items()):
        if len(splits) > 1:
            report.add(
                "error",
                "split-leakage",
                None,
                f"image_ref {ref!r} appears in splits {sorted(splits)}",
            )
    return report


@dataclass(frozen=True)
class DerivedFineRecord:
    """One fine-stage training item: a crop of a coarse region."""

    parent_item_id: str
    region_index: int
    crop_region: Box  # global frame, margin-expanded and clamped
    crop_transform: CropTransform
    fine_boxes_in_crop: tuple[Box, ...]
    source: str

    def __post_init__(self):
        size = self.crop_transform.target_size
        for b in self.fine_boxes_in_crop:
            if not (
                -1e-6 <= b.x_min and b.x_max <= size + 1e-6 and -1e-6 <= b.y_min and b.y_max <= size + 1e-6
            ):
                raise ValueError(f"fine box {b.to_list()} outside {size}x{size} crop")

    def to_json_dict(self) -> dict[str, Any]:
        t = self.crop_transform
        return {
            "v": MANIFEST_VERSION,
            "parent_item_id": self.parent_item_id,
            "region_index": self.region_index,
            "crop_region": self.crop_region.to_list(),
            "crop_transform": {
                "source_region": t.source_region.to_list(),
                "target_size": t.target_size,
                "scale": t.scale,
                "pad_x": t.pad_x,
                "pad_y": t.pad_y,
            },
            "fine_boxes_in_crop": [b.to_list() for b in self.fine_boxes_in_crop],
            "source": self.source,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping[str, Any]) -> "DerivedFineRecord":
        t = d["crop_transform"]
        return cls(
            parent_item_id=str(d["parent_item_id"]),
            region_index=int(d["region_index"]),
            crop_region=Box.from_list(d["crop_region"]),
            crop_transform=CropTransform(
                source_region=Box.from_list(t["source_region"]),
                target_size=int(t["target_size"]),
                scale=float(t["scale"]),
                pad_x=float(t["pad_x"]),
                pad_y=float(t["pad_y"]),
            ),
            fine_boxes_in_crop=tuple(Box.from_list(b) for b in d.get("fine_boxes_in_crop", [])),
            source=str(d["source"]),
        )


@dataclass
class DeriveResult:
    records: list[DerivedFineRecord]
    issues: list[LintIssue]


def _regions_for_record(
    record: AnnotationRecord,
    source: str,
    cfg: PipelineConfig,
    coarse: DetectorHandle | None,
    resolve_input: Callable[[str], Any] | None,
) -> list[Box]:
    if source == SOURCE_ANNOTATION:
        return list(record.coarse_boxes)
    if coarse is None:
        raise ValueError("coarse detector handle required when source is coarse_detection")
    if resolve_input is None:
        raise ValueError("resolve_input required when source is coarse_detection")
    dets = coarse.detect(resolve_input(record.image_ref))
    surviving = nms_indices(dets, cfg.nms_iou)
    kept = [i for i in surviving if dets[i].confidence >= cfg.tau_coarse]
    kept = kept[: cfg.max_coarse_regions_per_image]
    return [dets[i].box for i in kept]


def derive_fine_dataset(
    records: Sequence[AnnotationRecord],
    cfg: PipelineConfig,
    source: str = SOURCE_ANNOTATION,
    coarse: DetectorHandle | None = None,
    resolve_input: Callable[[str], Any] | None = None,
    min_keep_fraction: float = DEFAULT_MIN_KEEP_FRACTION,
) -> DeriveResult:
    """Build fine-stage records from coarse regions.

    Emits exactly one DerivedFineRecord per qualifying coarse region. Fine
    boxes are clipped to the margin-expanded region and dropped when the
    clipped area falls below min_keep_fraction of the original (a box at
    exactly the threshold is kept). Records that carry fine boxes but no
    coarse region are reported and skipped; the run continues.
    """
    if source not in (SOURCE_ANNOTATION, SOURCE_DETECTION):
        raise ValueError(f"unknown source {source!r}")
    out: list[DerivedFineRecord] = []
    issues: list[LintIssue] = []
    for record in records:
        regions = _regions_for_record(record, source, cfg, coarse, resolve_input)
        if not regions:
            if record.fine_boxes:
                issues.append(
                    LintIssue(
                        "error",
                        "fine-without-coarse",
                        record.item_id,
                        "record has fine boxes but no coarse region; skipped",
                    )
                )
            continue
        for idx, region in enumerate(regions):
            try:
                expanded = expand_with_margin(region, cfg.margin_fraction, record.image_bounds)
            except DegenerateRegionError as exc:
                issues.append(LintIssue("error", "degenerate-region", record.item_id, str(exc)))
                continue
            transform = make_crop_transform(expanded, cfg.fine_input_size)
            kept_boxes: list[Box] = []
            for fb in record.fine_boxes:
                clipped = fb.intersect(expanded)
                if clipped is None:
                    continue
                if clipped.area < min_keep_fraction * fb.area:
                    continue
                kept_boxes.append(transform.box_to_crop(clipped))
            out.append(
                DerivedFineRecord(
                    parent_item_id=record.item_id,
                    region_index=idx,
                    crop_region=expanded,
                    crop_transform=transform,
                    fine_boxes_in_crop=tuple(kept_boxes),
                    source=source,
                )
            )
    return DeriveResult(records=out, issues=issues)


def back_projection_error(record: DerivedFineRecord) -> float:
    """Worst distance (px) a derived box lands outside its parent region
    when mapped back to the global frame; ~0 for a correct derivation."""
    region = record.crop_region
    worst = 0.0
    for b in record.fine_boxes_in_crop:
        g = record.crop_transform.box_to_global(b)
        worst = max(
            worst,
            region.x_min - g.x_min,
            g.x_max - region.x_max,
            region.y_min - g.y_min,
            g.y_max - region.y_max,
        )
    return worst


def scenes_to_annotations(scenes: Iterable, split: str = "test") -> list[AnnotationRecord]:
    """Ground-truth annotation records for symbolic scenes."""
    records = []
    for s in scenes:
        records.append(
            AnnotationRecord(
                item_id=s.ref,
                image_ref=s.ref,
                image_size=(s.image_bounds.width, s.image_bounds.height),
                coarse_boxes=() if s.gt_coarse_region is None else (s.gt_coarse_region,),
                fine_boxes=() if s.gt_fine_region is None else (s.gt_fine_region,),
                split=split,
                provenance="manual",
            )
        )
    return records


def write_annotation_manifest(path: str | Path, records: Iterable[AnnotationRecord]) -> int:
    return write_jsonl(path, (r.to_json_dict() for r in records))


def read_annotation_manifest(path: str | Path) -> list[AnnotationRecord]:
    return [AnnotationRecord.from_json_dict(row) for row in read_jsonl(path)]


def write_derived_manifest(path: str | Path, records: Iterable[DerivedFineRecord]) -> int:
    return write_jsonl(path, (r.to_json_dict() for r in records))


def read_derived_manifest(path: str | Path) -> list[DerivedFineRecord]:
    return [DerivedFineRecord.from_json_dict(row) for row in read_jsonl(path)]
