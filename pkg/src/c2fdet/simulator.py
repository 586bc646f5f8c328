"""Symbolic labeled scene generation across the three scenario classes.

Scenes carry no pixels, only ground-truth geometry and a latent class:

  a  -- a pose that looks like the action but holds no object
  b  -- the genuine action (the only positive label)
  c  -- an object-like distractor (stick, pen) without the pose
  plain_negative -- nothing of interest at all

Class b scenes have a pose-scale region with the object region nested
inside it; class a has only the pose region; class c only the object
region. Every scene's geometry is drawn from a private stream keyed by
(seed, scene id), so generation may be sharded by id ranges with output
identical to a sequential run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .geometry import Box
from .jsonl import read_jsonl, write_jsonl
from .rng import KeyedRng

CLASS_A = "a"
CLASS_B = "b"
CLASS_C = "c"
CLASS_PLAIN = "plain_negative"
SCENE_CLASSES = (CLASS_A, CLASS_B, CLASS_C, CLASS_PLAIN)

# Class blocks are emitted in this fixed order; scene ids are sequential.
_GENERATION_ORDER = (CLASS_B, CLASS_A, CLASS_C, CLASS_PLAIN)

_SCENE_GEOMETRY_SALT = 0x5CE1

MANIFEST_VERSION = 1


class CorpusSpecError(ValueError):
    """The corpus spec is unsatisfiable or inconsistent."""


@dataclass(frozen=True)
class Scene:
    """One symbolic frame with latent ground truth."""

    scene_id: int
    scene_class: str
    image_bounds: Box
    gt_coarse_region: Box | None
    gt_fine_region: Box | None

    def __post_init__(self):
        if self.scene_class not in SCENE_CLASSES:
            raise ValueError(f"unknown scene class {self.scene_class!r}")
        if self.scene_class == CLASS_B:
            if self.gt_coarse_region is None or self.gt_fine_region is None:
                raise ValueError("class b scenes need both ground-truth regions")
            if not self.gt_coarse_region.contains_box(self.gt_fine_region):
                raise ValueError("class b fine region must nest inside the coarse region")
        elif self.scene_class == CLASS_A:
            if self.gt_coarse_region is None or self.gt_fine_region is not None:
                raise ValueError("class a scenes have a coarse region and no fine region")
        elif self.scene_class == CLASS_C:
            if self.gt_fine_region is None or self.gt_coarse_region is not None:
                raise ValueError("class c scenes have a fine region and no coarse region")
        else:
            if self.gt_coarse_region is not None or self.gt_fine_region is not None:
                raise ValueError("plain_negative scenes have no regions")

    @property
    def label(self) -> bool:
        """True iff the action is genuinely present (class b)."""
        return self.scene_class == CLASS_B

    @property
    def ref(self) -> str:
        return f"scene:{self.scene_id}"

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "v": MANIFEST_VERSION,
            "scene_id": self.scene_id,
            "class": self.scene_class,
            "image_bounds": self.image_bounds.to_list(),
            "gt_coarse_region": None
            if self.gt_coarse_region is None
            else self.gt_coarse_region.to_list(),
            "gt_fine_region": None if self.gt_fine_region is None else self.gt_fine_region.to_list(),
            "label": self.label,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping[str, Any]) -> "Scene":
        if int(d.get("v", 0)) != MANIFEST_VERSION:
            raise ValueError(f"unsupported scene manifest version {d.get('v')!r}")
        scene = cls(
            scene_id=int(d["scene_id"]),
            scene_class=str(d["class"]),
            image_bounds=Box.from_list(d["image_bounds"]),
            gt_coarse_region=None if d["gt_coarse_region"] is None else Box.from_list(d["gt_coarse_region"]),
            gt_fine_region=None if d["gt_fine_region"] is None else Box.from_list(d["gt_fine_region"]),
        )
        if bool(d.get("label", scene.label)) != scene.label:
            raise ValueError(f"scene {scene.scene_id}: label inconsistent with class")
        return scene


@dataclass(frozen=True)
class GeometryRanges:
    """Size ranges for sampled regions, as fractions of the parent height."""

    coarse_height_frac: tuple[float, float] = (0.10, 0.35)
    fine_height_frac: tuple[float, float] = (0.15, 0.35)
    aspect: tuple[float, float] = (0.75, 1.30)

    def __post_init__(self):
        for name in ("coarse_height_frac", "fine_height_frac", "aspect"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise CorpusSpecError(f"{name} range must be positive and ordered, got ({lo}, {hi})")


@dataclass(frozen=True)
class CorpusSpec:
    """Counts per scenario class plus the sampling configuration."""

    count_b: int
    count_a: int
    count_c: int
    count_plain: int = 0
    seed: int = 0
    image_width: float = 1920.0
    image_height: float = 1080.0
    ranges: GeometryRanges = field(default_factory=GeometryRanges)

    def __post_init__(self):
        counts = (self.count_b, self.count_a, self.count_c, self.count_plain)
        if any(c < 0 for c in counts):
            raise CorpusSpecError("class counts must be >= 0")
        if sum(counts) <= 0:
            raise CorpusSpecError("corpus must contain at least one scene")
        if self.image_width <= 0 or self.image_height <= 0:
            raise CorpusSpecError("image dimensions must be positive")
        max_h = self.ranges.coarse_height_frac[1] * self.image_height
        max_w = max_h * self.ranges.aspect[1]
        if max_h > self.image_height or max_w > self.image_width:
            raise CorpusSpecError(
                f"sampled regions (up to {max_w:.0f}x{max_h:.0f}) cannot fit inside "
                f"a {self.image_width:.0f}x{self.image_height:.0f} image"
            )

    @property
    def total(self) -> int:
        return self.count_b + self.count_a + self.count_c + self.count_plain

    def count_for(self, scene_class: str) -> int:
        return {
            CLASS_B: self.count_b,
            CLASS_A: self.count_a,
            CLASS_C: self.count_c,
            CLASS_PLAIN: self.count_plain,
        }[scene_class]

    @property
    def image_bounds(self) -> Box:
        return Box(0.0, 0.0, self.image_width, self.image_height)


def _class_of_scene_id(spec: CorpusSpec, scene_id: int) -> str:
    offset = scene_id
    for cls in _GENERATION_ORDER:
        n = spec.count_for(cls)
        if offset < n:
            return cls
        offset -= n
    raise IndexError(f"scene_id {scene_id} out of range for corpus of {spec.total}")


def _sample_box_within(rng: KeyedRng, bounds: Box, height: float, aspect: float) -> Box:
    width = height * aspect
    if width > bounds.width or height > bounds.height:
        raise CorpusSpecError(
            f"sampled region {width:.1f}x{height:.1f} does not fit in "
            f"{bounds.width:.1f}x{bounds.height:.1f}"
        )
    x0 = rng.uniform(bounds.x_min, bounds.x_max - width)
    y0 = rng.uniform(bounds.y_min, bounds.y_max - height)
    return Box(x0, y0, x0 + width, y0 + height)


def generate_scene(spec: CorpusSpec, scene_id: int) -> Scene:
    """Generate the scene with this id; a pure function of (spec, scene_id).

    Draw order per scene: coarse height fraction, coarse aspect, coarse x,
    coarse y, then the same four for the nested fine region. Classes that
    lack a region still consume its draws so that geometry depends only on
    (seed, scene_id), not on the class layout of the corpus.
    """
    cls = _class_of_scene_id(spec, scene_id)
    rng = KeyedRng(spec.seed, _SCENE_GEOMETRY_SALT, scene_id)
    bounds = spec.image_bounds
    r = spec.ranges

    coarse_h = rng.uniform(*r.coarse_height_frac) * bounds.height
    coarse = _sample_box_within(rng, bounds, coarse_h, rng.uniform(*r.aspect))

    fine_h = rng.uniform(*r.fine_height_frac) * coarse.height
    fine_aspect = rng.uniform(*r.aspect)
    fine_w = min(fine_h * fine_aspect, coarse.width)
    fine_x0 = rng.uniform(coarse.x_min, coarse.x_max - fine_w)
    fine_y0 = rng.uniform(coarse.y_min, coarse.y_max - fine_h)
    fine = Box(fine_x0, fine_y0, fine_x0 + fine_w, fine_y0 + fine_h)

    if cls == CLASS_B:
        return Scene(scene_id, cls, bounds, coarse, fine)
    if cls == CLASS_A:
        return Scene(scene_id, cls, bounds, coarse, None)
    if cls == CLASS_C:
        return Scene(scene_id, cls, bounds, None, fine)
    return Scene(scene_id, cls, bounds, None, None)


def generate_corpus(spec: CorpusSpec) -> list[Scene]:
    """All scenes of the corpus, in scene-id order (class blocks: b, a, c, plain)."""
    return [generate_scene(spec, sid) for sid in range(spec.total)]


def write_scene_manifest(path: str | Path, scenes: Iterable[Scene]) -> int:
    return write_jsonl(path, (s.to_json_dict() for s in scenes))


def read_scene_manifest(path: str | Path) -> list[Scene]:
    return [Scene.from_json_dict(row) for row in read_jsonl(path)]
