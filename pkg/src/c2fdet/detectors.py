"""Detector abstraction and the parameterized oracle implementation.

A detector handle is anything that can be asked for detections on an
input, optionally restricted to a region (in which case results come back
in the crop frame of that region's letterbox transform). Real CNN models
plug in through the sidecar client (see sidecar_client.py); the oracle
detectors below run on symbolic scenes and fire according to per-class
rates, which makes every probabilistic statement about the pipeline
exactly computable.

Oracle determinism: each detect() call derives a private SplitMix64 stream
from (profile seed, role salt, scene id). Draws are consumed in a fixed
order: fire coin, confidence, then four edge-jitter values. Identical
(seed, scene) always yields the identical detection, no matter how many
other detectors ran in between or on which thread.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Any, Mapping

from .geometry import Box, make_crop_transform
from .rng import KeyedRng

if TYPE_CHECKING:
    from .simulator import Scene

ROLE_COARSE = "coarse"
ROLE_FINE = "fine"
ROLE_SINGLE_I = "single_I"
ROLE_SINGLE_II = "single_II"
ROLES = (ROLE_COARSE, ROLE_FINE, ROLE_SINGLE_I, ROLE_SINGLE_II)

LABEL_COARSE = "coarse_pose"
LABEL_FINE = "fine_cigarette"

# Pose-scale roles report the whole-pose envelope, object-scale roles the
# hand-held object itself.
_POSE_SCALE_ROLES = frozenset({ROLE_COARSE, ROLE_SINGLE_I})

_ROLE_SALT = {ROLE_COARSE: 0xC0A5, ROLE_FINE: 0xF14E, ROLE_SINGLE_I: 0x51, ROLE_SINGLE_II: 0x52}

DEFAULT_COARSE_INPUT_SIZE = 1280
DEFAULT_FINE_INPUT_SIZE = 320


class DetectorTransportError(RuntimeError):
    """Talking to an external detector failed; distinct from 'no detections'."""


@dataclass(frozen=True)
class Detection:
    """One detector output: class label, confidence and a box in `frame`."""

    label: str
    confidence: float
    box: Box
    frame: str = "global"

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")

    def with_box(self, box: Box, frame: str | None = None) -> "Detection":
        return replace(self, box=box, frame=self.frame if frame is None else frame)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "conf": self.confidence,
            "box": self.box.to_list(),
            "frame": self.frame,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping[str, Any]) -> "Detection":
        return cls(
            label=str(d["label"]),
            confidence=float(d["conf"]),
            box=Box.from_list(d["box"]),
            frame=str(d.get("frame", "global")),
        )


@dataclass(frozen=True)
class DetectorProfile:
    """Per-class firing rates of an oracle detector.

    tp_rate_b is the probability of firing on a genuine action scene
    (class b); fp_rate_a fires on a pose without the object (class a);
    fp_rate_c fires on an object-like distractor without the pose
    (class c). Fired confidences are drawn from a normal(conf_mean,
    conf_width) truncated to [0, 1].
    """

    role: str
    tp_rate_b: float
    fp_rate_a: float
    fp_rate_c: float
    conf_mean: float = 0.8
    conf_width: float = 0.1
    rng_seed: int = 0

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}, expected one of {ROLES}")
        for name in ("tp_rate_b", "fp_rate_a", "fp_rate_c"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.conf_width <= 0.0:
            raise ValueError("conf_width must be positive")

    def rate_for_class(self, scene_class: str) -> float:
        if scene_class == "b":
            return self.tp_rate_b
        if scene_class == "a":
            return self.fp_rate_a
        if scene_class == "c":
            return self.fp_rate_c
        return 0.0

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "role": self.role,
            "tp_rate_b": self.tp_rate_b,
            "fp_rate_a": self.fp_rate_a,
            "fp_rate_c": self.fp_rate_c,
            "conf_mean": self.conf_mean,
            "conf_width": self.conf_width,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping[str, Any]) -> "DetectorProfile":
        return cls(
            role=str(d["role"]),
            tp_rate_b=float(d["tp_rate_b"]),
            fp_rate_a=float(d["fp_rate_a"]),
            fp_rate_c=float(d["fp_rate_c"]),
            conf_mean=float(d.get("conf_mean", 0.8)),
            conf_width=float(d.get("conf_width", 0.1)),
            rng_seed=int(d.get("rng_seed", 0)),
        )


def perfect_profile(role: str, rng_seed: int = 0) -> DetectorProfile:
    """Profile that always fires on class b and never on negatives."""
    return DetectorProfile(role=role, tp_rate_b=1.0, fp_rate_a=0.0, fp_rate_c=0.0, rng_seed=rng_seed)


class DetectorHandle(ABC):
    """Invokable detector with a role and a nominal input size."""

    identifier: str
    role: str
    input_size: int

    @abstractmethod
    def detect(self, target: Any, region: Box | None = None) -> list[Detection]:
        """Detect on `target`, optionally restricted to `region`.

        With a region, returned boxes are in the crop frame of
        make_crop_transform(region, input_size); otherwise they are in the
        input's global frame. Raises DetectorTransportError when an
        external backend cannot be reached.
        """


class OracleDetector(DetectorHandle):
    """Synthetic detector whose firing is a seeded function of the scene.

    Fired boxes are the scene's ground-truth region for the role's scale,
    perturbed by uniform edge jitter. Classes that lack a region at the
    role's scale get a synthesized stand-in: a pose-scale envelope blown up
    around the object box (class c seen by a pose detector), or a central
    sub-box where the object would be held (class a seen by an object
    detector). plain_negative scenes never fire.
    """

    def __init__(
        self,
        profile: DetectorProfile,
        input_size: int | None = None,
        jitter_fraction: float = 0.05,
        envelope_scale: float = 4.0,
        subbox_fraction: float = 0.25,
    ):
        if input_size is None:
            input_size = (
                DEFAULT_FINE_INPUT_SIZE if profile.role == ROLE_FINE else DEFAULT_COARSE_INPUT_SIZE
            )
        if input_size <= 0:
            raise ValueError("input_size must be positive")
        self.profile = profile
        self.role = profile.role
        self.input_size = input_size
        self.identifier = f"oracle:{profile.role}"
        self.jitter_fraction = jitter_fraction
        self.envelope_scale = envelope_scale
        self.subbox_fraction = subbox_fraction
        self._label = LABEL_COARSE if profile.role in _POSE_SCALE_ROLES else LABEL_FINE
        self._salt = _ROLE_SALT[profile.role]

    def detect(self, target: "Scene", region: Box | None = None) -> list[Detection]:
        scene = target
        bounds = scene.image_bounds
        if region is not None and not bounds.contains_box(region, tol=1e-6):
            raise ValueError(f"region {region.to_list()} outside image bounds {bounds.to_list()}")

        rate = self.profile.rate_for_class(scene.scene_class)
        if rate <= 0.0:
            return []
        rng = KeyedRng(self.profile.rng_seed, self._salt, scene.scene_id)
        if rng.random() >= rate:
            return []

        anchor = self._anchor_box(scene, region)
        if anchor is None:
            return []
        confidence = rng.truncated_normal(self.profile.conf_mean, self.profile.conf_width)
        fired = self._jitter(rng, anchor)
        clip_to = region if region is not None else bounds
        clipped = fired.intersect(clip_to)
        if clipped is None:
            return []
        if region is not None:
            transform = make_crop_transform(region, self.input_size)
            return [Detection(self._label, confidence, transform.box_to_crop(clipped), "crop")]
        return [Detection(self._label, confidence, clipped, "global")]

    def _anchor_box(self, scene: "Scene", region: Box | None) -> Box | None:
        coarse = scene.gt_coarse_region
        fine = scene.gt_fine_region
        if self.role in _POSE_SCALE_ROLES:
            if coarse is not None:
                return coarse
            if fine is not None:
                return _scaled_envelope(fine, self.envelope_scale, scene.image_bounds)
            return None
        # object-scale roles
        if fine is not None:
            if region is not None and not region.contains_point(*fine.center):
                return None
            return fine
        base = region if region is not None else coarse
        if base is None:
            return None
        return _central_subbox(base, self.subbox_fraction)

    def _jitter(self, rng: KeyedRng, b: Box) -> Box:
        f = self.jitter_fraction
        if f <= 0.0:
            return b
        dx0 = rng.uniform(-f, f) * b.width
        dy0 = rng.uniform(-f, f) * b.height
        dx1 = rng.uniform(-f, f) * b.width
        dy1 = rng.uniform(-f, f) * b.height
        return Box(b.x_min + dx0, b.y_min + dy0, b.x_max + dx1, b.y_max + dy1)


def _scaled_envelope(b: Box, factor: float, bounds: Box) -> Box:
    """Blow a box up around its center, clamped to bounds (still contains b)."""
    cx, cy = b.center
    hw = 0.5 * b.width * factor
    hh = 0.5 * b.height * factor
    return Box(
        max(cx - hw, bounds.x_min),
        max(cy - hh, bounds.y_min),
        min(cx + hw, bounds.x_max),
        min(cy + hh, bounds.y_max),
    )


def _central_subbox(b: Box, fraction: float) -> Box:
    cx, cy = b.center
    hw = 0.5 * b.width * fraction
    hh = 0.5 * b.height * fraction
    return Box(cx - hw, cy - hh, cx + hw, cy + hh)


def oracle_from_profile(profile: DetectorProfile, input_size: int | None = None) -> OracleDetector:
    """Build an oracle handle; input size defaults per role (1280 / 320)."""
    return OracleDetector(profile, input_size=input_size)


@dataclass(frozen=True)
class ImageRef:
    """Reference to a real image for sidecar-backed detection."""

    ref: str
    width: float
    height: float

    @property
    def image_bounds(self) -> Box:
        return Box(0.0, 0.0, float(self.width), float(self.height))
