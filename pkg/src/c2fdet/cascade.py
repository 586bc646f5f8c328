"""Two-stage coarse-to-fine pipeline and temporal aggregation.

Stage 1 detects pose-scale candidates on the full image. Each surviving
candidate is expanded by a context margin, letterboxed into the fine
input size, and handed to the object-scale detector; fine hits are
projected back to the global frame. A candidate counts as confirmed only
when at least one fine detection clears its threshold inside the region,
so the fine stage can remove positives but never add them. The image
decision is simply "any confirmed pair".

Stage-2 work for distinct regions may run on a thread pool; results are
re-joined in region order, so parallelism never changes the output.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

from .detectors import Detection, DetectorHandle
from .geometry import (
    Box,
    DegenerateRegionError,
    expand_with_margin,
    make_crop_transform,
    nms_indices,
    project_to_global,
)

RESULT_VERSION = 1


@dataclass(frozen=True)
class PipelineConfig:
    coarse_input_size: int = 1280
    fine_input_size: int = 320
    tau_coarse: float = 0.25
    tau_fine: float = 0.50
    margin_fraction: float = 0.15
    nms_iou: float = 0.45
    max_coarse_regions_per_image: int = 16
    temporal_k: int = 3
    temporal_n: int = 5

    def __post_init__(self):
        if self.coarse_input_size <= 0 or self.fine_input_size <= 0:
            raise ValueError("input sizes must be positive")
        if not (0.0 <= self.tau_coarse <= 1.0 and 0.0 <= self.tau_fine <= 1.0):
            raise ValueError("thresholds must be in [0, 1]")
        if self.margin_fraction < 0.0:
            raise ValueError("margin_fraction must be >= 0")
        if not 0.0 <= self.nms_iou <= 1.0:
            raise ValueError("nms_iou must be in [0, 1]")
        if self.max_coarse_regions_per_image < 1:
            raise ValueError("max_coarse_regions_per_image must be >= 1")
        if not 1 <= self.temporal_k <= self.temporal_n:
            raise ValueError("need 1 <= temporal_k <= temporal_n")

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "coarse_input_size": self.coarse_input_size,
            "fine_input_size": self.fine_input_size,
            "tau_coarse": self.tau_coarse,
            "tau_fine": self.tau_fine,
            "margin_fraction": self.margin_fraction,
            "nms_iou": self.nms_iou,
            "max_coarse_regions_per_image": self.max_coarse_regions_per_image,
            "temporal_k": self.temporal_k,
            "temporal_n": self.temporal_n,
        }

    @classmethod
    def from_json_dict(cls, d: dict[str, Any]) -> "PipelineConfig":
        defaults = cls()
        kwargs = {}
        for name in defaults.to_json_dict():
            if name in d:
                kwargs[name] = type(getattr(defaults, name))(d[name])
        return cls(**kwargs)


@dataclass(frozen=True)
class ConfirmedPair:
    """A coarse candidate validated by its best fine detection."""

    coarse: Detection
    fine: Detection  # global frame
    combined_score: float
    coarse_index: int  # index into the raw coarse detection list

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "coarse": self.coarse.to_json_dict(),
            "fine": self.fine.to_json_dict(),
            "combined_score": self.combined_score,
            "coarse_index": self.coarse_index,
        }


@dataclass(frozen=True)
class CascadeResult:
    ref: str
    scene_id: int | None
    image_decision: bool
    confirmed: list[ConfirmedPair]
    rejected_coarse: list[Detection]
    diagnostics: dict[str, int] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.image_decision != bool(self.confirmed):
            raise ValueError("image_decision must equal 'confirmed is non-empty'")

    def to_json_dict(self) -> dict[str, Any]:
        """Deterministic serialization; timings are deliberately excluded."""
        row: dict[str, Any] = {
            "v": RESULT_VERSION,
            "ref": self.ref,
            "decision": self.image_decision,
            "confirmed": [p.to_json_dict() for p in self.confirmed],
            "rejected_coarse": [d.to_json_dict() for d in self.rejected_coarse],
            "diagnostics": self.diagnostics,
        }
        if self.scene_id is not None:
            row["scene_id"] = self.scene_id
        return row


@dataclass(frozen=True)
class SingleResult:
    ref: str
    scene_id: int | None
    decision: bool
    detections: list[Detection]

    def to_json_dict(self) -> dict[str, Any]:
        row: dict[str, Any] = {
            "v": RESULT_VERSION,
            "ref": self.ref,
            "decision": self.decision,
            "detections": [d.to_json_dict() for d in self.detections],
        }
        if self.scene_id is not None:
            row["scene_id"] = self.scene_id
        return row


def _target_ids(target: Any) -> tuple[str, int | None]:
    scene_id = getattr(target, "scene_id", None)
    ref = getattr(target, "ref", None)
    if ref is None:
        ref = f"scene:{scene_id}" if scene_id is not None else repr(target)
    return str(ref), scene_id


@dataclass(frozen=True)
class _RegionOutcome:
    coarse_index: int
    coarse: Detection
    confirmed_fine: Detection | None
    degenerate: bool = False


def _process_region(
    fine: DetectorHandle, target: Any, coarse_det: Detection, coarse_index: int, cfg: PipelineConfig
) -> _RegionOutcome:
    bounds: Box = target.image_bounds
    try:
        region = expand_with_margin(coarse_det.box, cfg.margin_fraction, bounds)
    except DegenerateRegionError:
        return _RegionOutcome(coarse_index, coarse_det, None, degenerate=True)
    transform = make_crop_transform(region, cfg.fine_input_size)
    best: Detection | None = None
    for det in fine.detect(target, region=region):
        if det.confidence < cfg.tau_fine:
            continue
        projected = project_to_global(det, transform)
        clipped = projected.box.intersect(region)
        if clipped is None:
            continue
        projected = projected.with_box(clipped)
        if best is None or projected.confidence > best.confidence:
            best = projected
    return _RegionOutcome(coarse_index, coarse_det, best)


def run_cascade(
    coarse: DetectorHandle,
    fine: DetectorHandle,
    target: Any,
    cfg: PipelineConfig,
    threads: int = 1,
) -> CascadeResult:
    """Run the full two-stage pipeline on one image/scene.

    Detector transport failures propagate as DetectorTransportError; the
    caller decides whether to abort the run or record the image as errored.
    They are never converted into a negative decision.
    """
    ref, scene_id = _target_ids(target)
    t0 = time.perf_counter()
    raw = coarse.detect(target)
    surviving = nms_indices(raw, cfg.nms_iou)
    above_tau = [i for i in surviving if raw[i].confidence >= cfg.tau_coarse]
    kept = above_tau[: cfg.max_coarse_regions_per_image]
    t1 = time.perf_counter()

    if threads > 1 and len(kept) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(
                pool.map(lambda i: _process_region(fine, target, raw[i], i, cfg), kept)
            )
    else:
        outcomes = [_process_region(fine, target, raw[i], i, cfg) for i in kept]
    t2 = time.perf_counter()

    confirmed = [
        ConfirmedPair(
            coarse=o.coarse,
            fine=o.confirmed_fine,
            combined_score=o.coarse.confidence * o.confirmed_fine.confidence,
            coarse_index=o.coarse_index,
        )
        for o in outcomes
        if o.confirmed_fine is not None
    ]
    confirmed.sort(key=lambda p: (-p.combined_score, p.coarse_index))
    rejected = [o.coarse for o in outcomes if o.confirmed_fine is None]

    diagnostics = {
        "coarse_raw": len(raw),
        "coarse_after_nms": len(surviving),
        "coarse_kept": len(kept),
        "overflow_dropped": len(above_tau) - len(kept),
        "degenerate_regions": sum(1 for o in outcomes if o.degenerate),
    }
    timings = {"coarse_s": t1 - t0, "fine_s": t2 - t1, "total_s": t2 - t0}
    return CascadeResult(
        ref=ref,
        scene_id=scene_id,
        image_decision=bool(confirmed),
        confirmed=confirmed,
        rejected_coarse=rejected,
        diagnostics=diagnostics,
        timings=timings,
    )


def run_single(model: DetectorHandle, target: Any, tau: float) -> SingleResult:
    """Single-model baseline: positive iff any detection clears tau."""
    ref, scene_id = _target_ids(target)
    dets = model.detect(target)
    return SingleResult(
        ref=ref,
        scene_id=scene_id,
        decision=any(d.confidence >= tau for d in dets),
        detections=list(dets),
    )


def aggregate_temporal(decisions: Sequence[bool], k: int, n: int) -> list[tuple[int, int]]:
    """k-of-n sliding-window event extraction over per-frame decisions.

    Frame i is active when at least k of the last n decisions (the window
    ending at i; a shorter prefix window before frame n-1) are positive.
    Runs of active frames merge into inclusive [start, end] intervals.
    """
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    events: list[tuple[int, int]] = []
    run_start: int | None = None
    window = 0
    for i, d in enumerate(decisions):
        window += 1 if d else 0
        if i >= n and decisions[i - n]:
            window -= 1
        active = window >= k
        if active and run_start is None:
            run_start = i
        elif not active and run_start is not None:
            events.append((run_start, i - 1))
            run_start = None
    if run_start is not None:
        events.append((run_start, len(decisions) - 1))
    return events
