"""Axis-aligned box arithmetic: IoU, NMS, margin expansion, letterbox crops.

All coordinates are real-valued pixels. Boxes are immutable and strictly
positive-area by construction, so the operations below never need to guard
against degenerate inputs. Everything here is a pure function; the module
is safe for unrestricted concurrent use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

if TYPE_CHECKING:
    from .detectors import Detection


class DegenerateRegionError(ValueError):
    """A region collapsed to zero area, e.g. after clamping out of frame."""


class ProjectionError(ValueError):
    """A crop-frame box extends into the letterbox padding."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle with x_min < x_max and y_min < y_max."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        for v in (self.x_min, self.y_min, self.x_max, self.y_max):
            if not math.isfinite(v):
                raise ValueError(f"box coordinates must be finite, got {v!r}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                "box must have strictly positive area: "
                f"({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    def contains_point(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def contains_box(self, other: "Box", tol: float = 0.0) -> bool:
        return (
            other.x_min >= self.x_min - tol
            and other.y_min >= self.y_min - tol
            and other.x_max <= self.x_max + tol
            and other.y_max <= self.y_max + tol
        )

    def intersect(self, other: "Box") -> "Box | None":
        """Intersection box, or None when the overlap has zero area."""
        x0 = max(self.x_min, other.x_min)
        y0 = max(self.y_min, other.y_min)
        x1 = min(self.x_max, other.x_max)
        y1 = min(self.y_max, other.y_max)
        if x0 < x1 and y0 < y1:
            return Box(x0, y0, x1, y1)
        return None

    def to_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    @classmethod
    def from_list(cls, coords: Sequence[float]) -> "Box":
        if len(coords) != 4:
            raise ValueError(f"expected 4 coordinates, got {len(coords)}")
        return cls(float(coords[0]), float(coords[1]), float(coords[2]), float(coords[3]))


def iou(a: Box, b: Box) -> float:
    """Intersection over union; 0 when disjoint, 1 iff the boxes are equal."""
    inter = a.intersect(b)
    if inter is None:
        return 0.0
    inter_area = inter.area
    return inter_area / (a.area + b.area - inter_area)


def nms_indices(dets: "Sequence[Detection]", iou_threshold: float) -> list[int]:
    """Input indices surviving greedy non-maximum suppression.

    Candidates are visited in descending confidence, ties broken by
    ascending input index, which makes the result deterministic. A
    candidate is suppressed when its IoU with an already-kept detection
    exceeds iou_threshold. The returned indices keep the visiting order,
    i.e. sorted by descending confidence.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in [0, 1], got {iou_threshold}")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    kept: list[int] = []
    for i in order:
        if all(iou(dets[i].box, dets[j].box) <= iou_threshold for j in kept):
            kept.append(i)
    return kept


def nms(dets: "Sequence[Detection]", iou_threshold: float) -> "list[Detection]":
    """Greedy non-maximum suppression; see nms_indices for the exact rules."""
    return [dets[i] for i in nms_indices(dets, iou_threshold)]


def expand_with_margin(b: Box, margin_fraction: float, image_bounds: Box) -> Box:
    """Grow each side by margin_fraction of that dimension, clamped to bounds.

    Raises DegenerateRegionError when clamping collapses the box, which
    means the region lies outside the frame.
    """
    if margin_fraction < 0.0:
        raise ValueError(f"margin_fraction must be >= 0, got {margin_fraction}")
    mx = margin_fraction * b.width
    my = margin_fraction * b.height
    x0 = max(b.x_min - mx, image_bounds.x_min)
    y0 = max(b.y_min - my, image_bounds.y_min)
    x1 = min(b.x_max + mx, image_bounds.x_max)
    y1 = min(b.y_max + my, image_bounds.y_max)
    if not (x0 < x1 and y0 < y1):
        raise DegenerateRegionError(
            f"region {b.to_list()} with margin {margin_fraction} falls outside "
            f"image bounds {image_bounds.to_list()}"
        )
    return Box(x0, y0, x1, y1)


@dataclass(frozen=True)
class CropTransform:
    """Letterbox mapping between a global-frame region and a square crop.

    The region is scaled by a single factor (aspect preserved) so its longer
    side fills target_size, and the shorter side is centered between equal
    padding bands. forward/backward are exact affine inverses of each other.
    """

    source_region: Box
    target_size: int
    scale: float
    pad_x: float
    pad_y: float

    @property
    def content_box(self) -> Box:
        """Crop-frame area covered by actual content (inside the padding)."""
        return Box(
            self.pad_x,
            self.pad_y,
            self.target_size - self.pad_x,
            self.target_size - self.pad_y,
        )

    def point_to_crop(self, x: float, y: float) -> tuple[float, float]:
        return (
            (x - self.source_region.x_min) * self.scale + self.pad_x,
            (y - self.source_region.y_min) * self.scale + self.pad_y,
        )

    def point_to_global(self, x: float, y: float) -> tuple[float, float]:
        return (
            (x - self.pad_x) / self.scale + self.source_region.x_min,
            (y - self.pad_y) / self.scale + self.source_region.y_min,
        )

    def box_to_crop(self, b: Box) -> Box:
        x0, y0 = self.point_to_crop(b.x_min, b.y_min)
        x1, y1 = self.point_to_crop(b.x_max, b.y_max)
        return Box(x0, y0, x1, y1)

    def box_to_global(self, b: Box) -> Box:
        x0, y0 = self.point_to_global(b.x_min, b.y_min)
        x1, y1 = self.point_to_global(b.x_max, b.y_max)
        return Box(x0, y0, x1, y1)


def make_crop_transform(region: Box, target_size: int) -> CropTransform:
    """Build the letterbox transform taking region into a square crop."""
    if target_size <= 0:
        raise ValueError(f"target_size must be positive, got {target_size}")
    scale = target_size / max(region.width, region.height)
    pad_x = 0.5 * (target_size - scale * region.width)
    pad_y = 0.5 * (target_size - scale * region.height)
    return CropTransform(
        source_region=region, target_size=target_size, scale=scale, pad_x=pad_x, pad_y=pad_y
    )


def project_to_global(det: "Detection", transform: CropTransform, pad_tolerance: float = 1.0):
    """Map a crop-frame detection back to the global frame.

    The detection must lie inside the crop's content area; anything deeper
    than pad_tolerance pixels into the padding indicates inconsistent
    detector output and raises ProjectionError. Confidence and label are
    unchanged.
    """
    content = transform.content_box
    b = det.box
    if (
        b.x_min < content.x_min - pad_tolerance
        or b.y_min < content.y_min - pad_tolerance
        or b.x_max > content.x_max + pad_tolerance
        or b.y_max > content.y_max + pad_tolerance
    ):
        raise ProjectionError(
            f"crop-frame box {b.to_list()} extends into letterbox padding "
            f"(content area {content.to_list()}, tolerance {pad_tolerance}px)"
        )
    return det.with_box(transform.box_to_global(b), frame="global")
