"""Image-level scoring, framework comparison and oracle calibration.

Accuracy here is binary image classification: a framework's decision on a
scene against the scene's label. Three frameworks are compared: a single
pose-focused detector (Single Model I), a single object-focused detector
(Single Model II), and the two-stage cascade.

Calibration solves oracle firing rates so the expected accuracies on a
given class mix match target values. The model assumes independence
between the coarse and fine stages' errors (they draw from separate
streams, so this holds exactly for the oracles) and pins the
underdetermined degrees of freedom by documented conventions:

  * single-model true-positive rate fixed at 0.95,
  * per-stage cascade true-positive rate fixed at 0.97,
  * a single model's characteristic false-positive rate (class a for the
    pose model, class c for the object model) is `fp_axis_ratio` times its
    off-axis rate,
  * the cascade's coarse stage inherits Single Model I's false-positive
    rates; the fine stage's rates then follow from the required joint
    false-confirmation probabilities, split evenly between classes a and c.

Rates are solved in "effective" space, i.e. P(fires and clears its score
threshold), then converted to nominal profile rates by dividing out the
probability that a drawn confidence clears the threshold. Pins sitting on
a boundary are moved minimally (e.g. a target of 1.0 forces the
true-positive pin up to 1 and all false-positive rates to 0); genuinely
unreachable targets raise CalibrationError naming the binding constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

from .cascade import PipelineConfig, run_cascade, run_single
from .detectors import (
    Detection,
    DetectorProfile,
    DetectorTransportError,
    ROLE_COARSE,
    ROLE_FINE,
    ROLE_SINGLE_I,
    ROLE_SINGLE_II,
    oracle_from_profile,
)
from .geometry import Box, iou
from .rng import truncated_normal_survival
from .simulator import CLASS_A, CLASS_B, CLASS_C, Scene

FRAMEWORK_SINGLE_I = "Single Model I"
FRAMEWORK_SINGLE_II = "Single Model II"
FRAMEWORK_CASCADE = "Coarse-to-fine Models"

DEFAULT_TAU_SINGLE = 0.5

REPORT_VERSION = 1


class CalibrationError(ValueError):
    """Targets cannot be met by any rate vector in [0, 1]."""


@dataclass(frozen=True)
class FrameworkStats:
    name: str
    tp: int
    fp: int
    tn: int
    fn: int
    errors: int = 0

    @property
    def scored(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.scored if self.scored else 0.0

    @property
    def precision(self) -> float:
        denom = self.tp + self.fp
        return self.tp / denom if denom else 0.0

    @property
    def recall(self) -> float:
        denom = self.tp + self.fn
        return self.tp / denom if denom else 0.0

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "errors": self.errors,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping[str, Any]) -> "FrameworkStats":
        return cls(
            name=str(d["name"]),
            tp=int(d["tp"]),
            fp=int(d["fp"]),
            tn=int(d["tn"]),
            fn=int(d["fn"]),
            errors=int(d.get("errors", 0)),
        )


@dataclass(frozen=True)
class EvalReport:
    model_label: str
    frameworks: tuple[FrameworkStats, ...]
    corpus_summary: dict[str, int]
    config_echo: dict[str, Any] = field(default_factory=dict)

    def framework(self, name: str) -> FrameworkStats:
        for f in self.frameworks:
            if f.name == name:
                return f
        raise KeyError(name)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "v": REPORT_VERSION,
            "model_label": self.model_label,
            "frameworks": [f.to_json_dict() for f in self.frameworks],
            "corpus_summary": self.corpus_summary,
            "config_echo": self.config_echo,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping[str, Any]) -> "EvalReport":
        return cls(
            model_label=str(d.get("model_label", "")),
            frameworks=tuple(FrameworkStats.from_json_dict(f) for f in d["frameworks"]),
            corpus_summary={str(k): int(v) for k, v in d["corpus_summary"].items()},
            config_echo=dict(d.get("config_echo", {})),
        )


DecisionFn = Callable[[Scene], bool]


def evaluate(
    frameworks: Sequence[tuple[str, DecisionFn]],
    scenes: Iterable[Scene],
    model_label: str = "",
    config_echo: dict[str, Any] | None = None,
) -> EvalReport:
    """Score each framework's per-image decisions against scene labels.

    A DetectorTransportError from a decision function excludes that image
    for that framework and increments its error count; it is never scored
    as a negative decision.
    """
    frameworks = list(frameworks)
    if not frameworks:
        raise ValueError("no frameworks to evaluate")
    counts = {name: {"tp": 0, "fp": 0, "tn": 0, "fn": 0, "errors": 0} for name, _ in frameworks}
    class_counts: dict[str, int] = {}
    total = 0
    for scene in scenes:
        total += 1
        class_counts[scene.scene_class] = class_counts.get(scene.scene_class, 0) + 1
        for name, fn in frameworks:
            c = counts[name]
            try:
                decision = fn(scene)
            except DetectorTransportError:
                c["errors"] += 1
                continue
            if decision and scene.label:
                c["tp"] += 1
            elif decision:
                c["fp"] += 1
            elif scene.label:
                c["fn"] += 1
            else:
                c["tn"] += 1
    if total == 0:
        raise ValueError("corpus is empty")
    stats = tuple(
        FrameworkStats(name=name, **counts[name]) for name, _ in frameworks
    )
    summary = {f"class_{k}": v for k, v in sorted(class_counts.items())}
    summary["total"] = total
    return EvalReport(
        model_label=model_label,
        frameworks=stats,
        corpus_summary=summary,
        config_echo=dict(config_echo or {}),
    )


def build_table_frameworks(
    profiles: Mapping[str, DetectorProfile],
    cfg: PipelineConfig,
    tau_single: float = DEFAULT_TAU_SINGLE,
) -> list[tuple[str, DecisionFn]]:
    """The three standard frameworks as (name, decision function) pairs."""
    single_i = oracle_from_profile(profiles[ROLE_SINGLE_I], cfg.coarse_input_size)
    single_ii = oracle_from_profile(profiles[ROLE_SINGLE_II], cfg.coarse_input_size)
    coarse = oracle_from_profile(profiles[ROLE_COARSE], cfg.coarse_input_size)
    fine = oracle_from_profile(profiles[ROLE_FINE], cfg.fine_input_size)
    return [
        (FRAMEWORK_SINGLE_I, lambda s: run_single(single_i, s, tau_single).decision),
        (FRAMEWORK_SINGLE_II, lambda s: run_single(single_ii, s, tau_single).decision),
        (FRAMEWORK_CASCADE, lambda s: run_cascade(coarse, fine, s, cfg).image_decision),
    ]


# --- calibration -----------------------------------------------------------


@dataclass(frozen=True)
class TableTargets:
    """Target image-level accuracies for the three frameworks."""

    single_i: float
    single_ii: float
    cascade: float

    def __post_init__(self):
        for name in ("single_i", "single_ii", "cascade"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise CalibrationError(f"target accuracy {name} must be in [0, 1], got {v}")


@dataclass(frozen=True)
class ClassCounts:
    n_b: int
    n_a: int
    n_c: int

    def __post_init__(self):
        if self.n_b <= 0 or self.n_a < 0 or self.n_c < 0 or (self.n_a + self.n_c) <= 0:
            raise CalibrationError("need n_b > 0 and at least one negative scene")

    @property
    def total(self) -> int:
        return self.n_b + self.n_a + self.n_c


@dataclass(frozen=True)
class CalibrationConventions:
    pin_tp_single: float = 0.95
    pin_tp_stage: float = 0.97
    fp_axis_ratio: float = 6.0
    tau_single: float = DEFAULT_TAU_SINGLE
    conf_mean: float = 0.8
    conf_width: float = 0.1


@dataclass(frozen=True)
class EffectiveRates:
    """Solved P(fire and clear threshold) per class, one triple per role."""

    tp_b: float
    fp_a: float
    fp_c: float


@dataclass(frozen=True)
class CalibrationResult:
    profiles: dict[str, DetectorProfile]
    effective: dict[str, EffectiveRates]
    expected_accuracy: dict[str, float]
    survival: dict[str, float]  # role -> P(confidence >= tau)
    counts: ClassCounts
    conventions: CalibrationConventions

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "v": 1,
            "profiles": {role: p.to_json_dict() for role, p in sorted(self.profiles.items())},
            "effective": {
                role: {"tp_b": e.tp_b, "fp_a": e.fp_a, "fp_c": e.fp_c}
                for role, e in sorted(self.effective.items())
            },
            "expected_accuracy": dict(sorted(self.expected_accuracy.items())),
            "survival": dict(sorted(self.survival.items())),
            "counts": {"n_b": self.counts.n_b, "n_a": self.counts.n_a, "n_c": self.counts.n_c},
            "conventions": {
                "pin_tp_single": self.conventions.pin_tp_single,
                "pin_tp_stage": self.conventions.pin_tp_stage,
                "fp_axis_ratio": self.conventions.fp_axis_ratio,
                "tau_single": self.conventions.tau_single,
                "conf_mean": self.conventions.conf_mean,
                "conf_width": self.conventions.conf_width,
            },
        }


def profiles_from_json_dict(d: Mapping[str, Any]) -> dict[str, DetectorProfile]:
    return {role: DetectorProfile.from_json_dict(pd) for role, pd in d["profiles"].items()}


def expected_single_accuracy(rates: EffectiveRates, counts: ClassCounts) -> float:
    return (
        counts.n_b * rates.tp_b
        + counts.n_a * (1.0 - rates.fp_a)
        + counts.n_c * (1.0 - rates.fp_c)
    ) / counts.total


def expected_cascade_accuracy(
    coarse: EffectiveRates, fine: EffectiveRates, counts: ClassCounts
) -> float:
    return (
        counts.n_b * coarse.tp_b * fine.tp_b
        + counts.n_a * (1.0 - coarse.fp_a * fine.fp_a)
        + counts.n_c * (1.0 - coarse.fp_c * fine.fp_c)
    ) / counts.total


def _solve_single(target: float, counts: ClassCounts, pin_tp: float, axis: str, ratio: float):
    """Effective (tp, fp_a, fp_c) for one single model; axis is the class
    the model characteristically false-fires on ('a' for pose, 'c' for
    object)."""
    n_neg = counts.n_a + counts.n_c
    t = pin_tp
    needed_correct_neg = target * counts.total - counts.n_b * t
    if needed_correct_neg > n_neg:
        fp_a = fp_c = 0.0
        t = (target * counts.total - n_neg) / counts.n_b
        if t > 1.0 + 1e-12:
            raise CalibrationError(
                f"target {target} needs a true-positive rate of {t:.4f} > 1"
            )
        t = min(t, 1.0)
    elif needed_correct_neg < 0.0:
        fp_a = fp_c = 1.0
        t = target * counts.total / counts.n_b
    else:
        expected_fp = n_neg - needed_correct_neg
        if axis == "a":
            fp_c = expected_fp / (counts.n_a * ratio + counts.n_c)
            fp_a = ratio * fp_c
            if fp_a > 1.0:
                fp_a = 1.0
                fp_c = (expected_fp - counts.n_a) / counts.n_c
        else:
            fp_a = expected_fp / (counts.n_a + counts.n_c * ratio)
            fp_c = ratio * fp_a
            if fp_c > 1.0:
                fp_c = 1.0
                fp_a = (expected_fp - counts.n_c) / counts.n_a
        for name, v in (("fp_a", fp_a), ("fp_c", fp_c)):
            if not -1e-12 <= v <= 1.0 + 1e-12:
                raise CalibrationError(f"target {target} drives {name} to {v:.4f}, outside [0, 1]")
        fp_a = min(max(fp_a, 0.0), 1.0)
        fp_c = min(max(fp_c, 0.0), 1.0)
    return EffectiveRates(tp_b=t, fp_a=fp_a, fp_c=fp_c)


def _solve_cascade(
    target: float, counts: ClassCounts, pin_tp_stage: float, coarse_fp: tuple[float, float]
):
    """Effective rates for the two cascade stages.

    coarse_fp carries the (fp_a, fp_c) the coarse stage inherits from the
    solved Single Model I. Returns (coarse_rates, fine_rates).
    """
    n_neg = counts.n_a + counts.n_c
    t_prod = pin_tp_stage * pin_tp_stage
    needed_correct_neg = target * counts.total - counts.n_b * t_prod
    if needed_correct_neg > n_neg:
        p_a = p_c = 0.0
        t_prod = (target * counts.total - n_neg) / counts.n_b
        if t_prod > 1.0 + 1e-12:
            raise CalibrationError(
                f"cascade target {target} needs a per-stage true-positive rate above 1"
            )
        t_prod = min(t_prod, 1.0)
    elif needed_correct_neg < 0.0:
        p_a = p_c = 1.0
        t_prod = target * counts.total / counts.n_b
    else:
        p = (n_neg - needed_correct_neg) / n_neg
        p_a = p_c = p
    t_stage = math.sqrt(t_prod)

    fca, fcc = coarse_fp
    if p_a == 0.0:
        fca, ffa = (0.0, 0.0)
    else:
        if fca <= 0.0 or p_a / fca > 1.0:
            fca = p_a  # coarse must fire at least as often as the joint probability
            ffa = 1.0
        else:
            ffa = p_a / fca
    if p_c == 0.0:
        fcc, ffc = (0.0, 0.0)
    else:
        if fcc <= 0.0 or p_c / fcc > 1.0:
            fcc = p_c
            ffc = 1.0
        else:
            ffc = p_c / fcc
    coarse_rates = EffectiveRates(tp_b=t_stage, fp_a=fca, fp_c=fcc)
    fine_rates = EffectiveRates(tp_b=t_stage, fp_a=ffa, fp_c=ffc)
    return coarse_rates, fine_rates


def _to_profile(role: str, eff: EffectiveRates, tau: float, conv: CalibrationConventions, seed: int):
    s = truncated_normal_survival(tau, conv.conf_mean, conv.conf_width)
    if s <= 0.0:
        raise CalibrationError(f"threshold {tau} leaves no confidence mass for role {role}")

    def nominal(v: float) -> float:
        return min(v / s, 1.0)

    return (
        DetectorProfile(
            role=role,
            tp_rate_b=nominal(eff.tp_b),
            fp_rate_a=nominal(eff.fp_a),
            fp_rate_c=nominal(eff.fp_c),
            conf_mean=conv.conf_mean,
            conf_width=conv.conf_width,
            rng_seed=seed,
        ),
        s,
    )


def calibrate_profiles(
    targets: TableTargets,
    counts: ClassCounts = ClassCounts(450, 200, 200),
    cfg: PipelineConfig | None = None,
    conventions: CalibrationConventions = CalibrationConventions(),
    rng_seed: int = 0,
) -> CalibrationResult:
    """Solve the four oracle profiles reproducing the target accuracies."""
    cfg = cfg or PipelineConfig()
    conv = conventions

    eff_i = _solve_single(targets.single_i, counts, conv.pin_tp_single, "a", conv.fp_axis_ratio)
    eff_ii = _solve_single(targets.single_ii, counts, conv.pin_tp_single, "c", conv.fp_axis_ratio)
    eff_coarse, eff_fine = _solve_cascade(
        targets.cascade, counts, conv.pin_tp_stage, (eff_i.fp_a, eff_i.fp_c)
    )

    prof_i, s_single = _to_profile(ROLE_SINGLE_I, eff_i, conv.tau_single, conv, rng_seed)
    prof_ii, _ = _to_profile(ROLE_SINGLE_II, eff_ii, conv.tau_single, conv, rng_seed)
    prof_coarse, s_coarse = _to_profile(ROLE_COARSE, eff_coarse, cfg.tau_coarse, conv, rng_seed)
    prof_fine, s_fine = _to_profile(ROLE_FINE, eff_fine, cfg.tau_fine, conv, rng_seed)

    expected = {
        FRAMEWORK_SINGLE_I: expected_single_accuracy(eff_i, counts),
        FRAMEWORK_SINGLE_II: expected_single_accuracy(eff_ii, counts),
        FRAMEWORK_CASCADE: expected_cascade_accuracy(eff_coarse, eff_fine, counts),
    }
    return CalibrationResult(
        profiles={
            ROLE_SINGLE_I: prof_i,
            ROLE_SINGLE_II: prof_ii,
            ROLE_COARSE: prof_coarse,
            ROLE_FINE: prof_fine,
        },
        effective={
            ROLE_SINGLE_I: eff_i,
            ROLE_SINGLE_II: eff_ii,
            ROLE_COARSE: eff_coarse,
            ROLE_FINE: eff_fine,
        },
        expected_accuracy=expected,
        survival={
            ROLE_SINGLE_I: s_single,
            ROLE_SINGLE_II: s_single,
            ROLE_COARSE: s_coarse,
            ROLE_FINE: s_fine,
        },
        counts=counts,
        conventions=conv,
    )


def scaled_class_counts(total: int, counts: ClassCounts) -> ClassCounts:
    """Scale a class mix to `total` scenes by largest-remainder rounding."""
    if total <= 0:
        raise ValueError("total must be positive")
    base = (counts.n_b, counts.n_a, counts.n_c)
    exact = [total * n / counts.total for n in base]
    floors = [math.floor(x) for x in exact]
    shortfall = total - sum(floors)
    order = sorted(range(3), key=lambda i: (-(exact[i] - floors[i]), i))
    for i in order[:shortfall]:
        floors[i] += 1
    return ClassCounts(n_b=floors[0], n_a=floors[1], n_c=floors[2])


# --- rendering --------------------------------------------------------------


def render_report(reports: EvalReport | Sequence[EvalReport], fmt: str = "text") -> str:
    """Render one or more reports; markdown mirrors the Models x Frameworks
    x Accuracy comparison layout."""
    if isinstance(reports, EvalReport):
        reports = [reports]
    reports = list(reports)
    if not reports or any(not r.frameworks for r in reports):
        raise ValueError("nothing to render: empty report")
    if fmt == "json":
        from .jsonl import dumps_canonical

        payload = [r.to_json_dict() for r in reports]
        return dumps_canonical(payload[0] if len(payload) == 1 else payload) + "\n"
    if fmt == "markdown":
        lines = ["| Models | Frameworks | Accuracy |", "| --- | --- | --- |"]
        for r in reports:
            label = r.model_label or "-"
            for i, f in enumerate(r.frameworks):
                lines.append(f"| {label if i == 0 else ''} | {f.name} | {f.accuracy:.3f} |")
        return "\n".join(lines) + "\n"
    if fmt == "text":
        lines = []
        for r in reports:
            lines.append(f"model: {r.model_label or '-'}")
            summary = ", ".join(f"{k}={v}" for k, v in sorted(r.corpus_summary.items()))
            lines.append(f"corpus: {summary}")
            for f in r.frameworks:
                lines.append(
                    f"  {f.name}: accuracy={f.accuracy:.4f} precision={f.precision:.4f} "
                    f"recall={f.recall:.4f} (tp={f.tp} fp={f.fp} tn={f.tn} fn={f.fn} "
                    f"errors={f.errors})"
                )
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


# --- auxiliary box-level metric ---------------------------------------------


@dataclass(frozen=True)
class BoxPR:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) else 0.0


def box_precision_recall(
    gt_boxes: Sequence[Box],
    detections: Sequence[Detection],
    iou_threshold: float = 0.5,
    conf_threshold: float = 0.0,
) -> BoxPR:
    """Greedy box matching (descending confidence, IoU >= threshold)."""
    preds = sorted(
        (d for d in detections if d.confidence >= conf_threshold),
        key=lambda d: -d.confidence,
    )
    matched = [False] * len(gt_boxes)
    tp = fp = 0
    for det in preds:
        best_i, best_v = -1, iou_threshold
        for i, g in enumerate(gt_boxes):
            if matched[i]:
                continue
            v = iou(det.box, g)
            if v >= best_v:
                best_i, best_v = i, v
        if best_i >= 0:
            matched[best_i] = True
            tp += 1
        else:
            fp += 1
    fn = matched.count(False)
    return BoxPR(tp=tp, fp=fp, fn=fn)
