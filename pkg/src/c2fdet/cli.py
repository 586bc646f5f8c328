"""Command-line entry point.

Subcommands: simulate | derive-fine | run | evaluate | report. All
primary outputs are canonical JSON/JSONL and byte-identical across
re-runs with the same seed; timings go to a separate sidecar file, and
each output gets a <name>.meta.json echoing the fully resolved
configuration for provenance.

Exit codes: 0 success, 1 usage, 2 I/O, 3 detector transport,
4 calibration infeasible.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from .cascade import PipelineConfig, run_cascade, run_single
from .dataset import (
    SOURCE_ANNOTATION,
    SOURCE_DETECTION,
    derive_fine_dataset,
    lint_manifest,
    read_annotation_manifest,
    scenes_to_annotations,
    write_derived_manifest,
)
from .detectors import (
    DetectorTransportError,
    ROLE_COARSE,
    ROLE_FINE,
    ROLE_SINGLE_I,
    ROLE_SINGLE_II,
    ROLES,
    oracle_from_profile,
    perfect_profile,
)
from .evaluation import (
    CalibrationError,
    ClassCounts,
    DEFAULT_TAU_SINGLE,
    EvalReport,
    FRAMEWORK_CASCADE,
    FRAMEWORK_SINGLE_I,
    FRAMEWORK_SINGLE_II,
    FrameworkStats,
    TableTargets,
    build_table_frameworks,
    calibrate_profiles,
    evaluate,
    profiles_from_json_dict,
    render_report,
)
from .jsonl import dumps_canonical, read_jsonl, write_json, write_jsonl
from .sidecar_client import SidecarDetector
from .simulator import CorpusSpec, CorpusSpecError, generate_corpus, read_scene_manifest, write_scene_manifest

CONFIG_VERSION = 1

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_TRANSPORT = 3
EXIT_CALIBRATION = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage problems, not argparse's 2
        raise UsageError(message)


_PIPELINE_KEYS = tuple(PipelineConfig().to_json_dict().keys())
_CONFIG_KEYS = _PIPELINE_KEYS + ("seed", "tau_single", "threads")


def _load_config_file(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict) or int(raw.get("v", 0)) != CONFIG_VERSION:
        raise UsageError(f"config file {path}: expected flat object with \"v\": {CONFIG_VERSION}")
    unknown = set(raw) - set(_CONFIG_KEYS) - {"v"}
    if unknown:
        raise UsageError(f"config file {path}: unknown keys {sorted(unknown)}")
    return {k: v for k, v in raw.items() if k != "v"}


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("pipeline configuration (flags > --config file > defaults)")
    g.add_argument("--config", help="flat JSON config file with a \"v\" key")
    for key in _PIPELINE_KEYS:
        flag = "--" + key.replace("_", "-")
        kind = float if isinstance(getattr(PipelineConfig(), key), float) else int
        g.add_argument(flag, type=kind, dest=key)


def _resolve_pipeline(args: argparse.Namespace) -> PipelineConfig:
    merged = PipelineConfig().to_json_dict()
    merged.update(_load_config_file(getattr(args, "config", None)))
    for key in _PIPELINE_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            merged[key] = v
    try:
        return PipelineConfig.from_json_dict(merged)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _resolve_scalar(args: argparse.Namespace, name: str, default):
    v = getattr(args, name, None)
    if v is not None:
        return v
    file_cfg = _load_config_file(getattr(args, "config", None))
    return type(default)(file_cfg.get(name, default))


def _meta_path(out: str) -> Path:
    return Path(str(out) + ".meta.json")


def _write_meta(out: str, command: str, resolved: dict[str, Any]) -> None:
    write_json(_meta_path(out), {"v": CONFIG_VERSION, "command": command, "config": resolved})


# --- simulate ----------------------------------------------------------------


def _cmd_simulate(args: argparse.Namespace) -> int:
    try:
        spec = CorpusSpec(
            count_b=args.b,
            count_a=args.a,
            count_c=args.c,
            count_plain=args.plain,
            seed=args.seed,
            image_width=args.image_width,
            image_height=args.image_height,
        )
    except CorpusSpecError as exc:
        raise UsageError(str(exc)) from exc
    scenes = generate_corpus(spec)
    n = write_scene_manifest(args.out, scenes)
    _write_meta(
        args.out,
        "simulate",
        {
            "b": args.b,
            "a": args.a,
            "c": args.c,
            "plain": args.plain,
            "seed": args.seed,
            "image_width": args.image_width,
            "image_height": args.image_height,
        },
    )
    print(f"wrote {n} scenes to {args.out}")
    return EXIT_OK


# --- derive-fine -------------------------------------------------------------


def _cmd_derive_fine(args: argparse.Namespace) -> int:
    cfg = _resolve_pipeline(args)
    seed = _resolve_scalar(args, "seed", 0)
    if args.scenes:
        scenes = read_scene_manifest(args.scenes)
        records = scenes_to_annotations(scenes)
        lint = lint_manifest(records)
        resolver = {s.ref: s for s in scenes}.get
    else:
        rows = list(read_jsonl(args.annotations))
        lint = lint_manifest(rows)
        records = read_annotation_manifest(args.annotations)
        resolver = None
    coarse = None
    if args.source == SOURCE_DETECTION:
        if resolver is None:
            raise UsageError("--source coarse_detection requires --scenes (symbolic corpus)")
        coarse = oracle_from_profile(
            perfect_profile(ROLE_COARSE, rng_seed=seed), cfg.coarse_input_size
        )
    result = derive_fine_dataset(records, cfg, source=args.source, coarse=coarse, resolve_input=resolver)
    n = write_derived_manifest(args.out, result.records)
    _write_meta(args.out, "derive-fine", {"source": args.source, "seed": seed, **cfg.to_json_dict()})
    for issue in result.issues:
        lint.issues.append(issue)
    if args.lint_out:
        write_json(args.lint_out, lint.to_json_dict())
    if lint.issues:
        sys.stderr.write(lint.render_text())
    print(f"wrote {n} derived fine records to {args.out}")
    return EXIT_OK


# --- run ---------------------------------------------------------------------


def _load_profiles(args: argparse.Namespace, seed: int):
    if args.profiles:
        payload = json.loads(Path(args.profiles).read_text(encoding="utf-8"))
        return profiles_from_json_dict(payload)
    if args.perfect_oracles:
        return {role: perfect_profile(role, rng_seed=seed) for role in ROLES}
    raise UsageError("run needs --profiles FILE or --perfect-oracles (plus optional --sidecar-*)")


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _resolve_pipeline(args)
    seed = _resolve_scalar(args, "seed", 0)
    threads = _resolve_scalar(args, "threads", 1)
    tau_single = _resolve_scalar(args, "tau_single", DEFAULT_TAU_SINGLE)
    framework = args.framework
    if args.single:
        framework = {"I": "single-I", "II": "single-II"}[args.single]

    scenes = read_scene_manifest(args.scenes)

    needs_oracles = not (args.sidecar_coarse and args.sidecar_fine) or framework != "cascade"
    profiles = _load_profiles(args, seed) if needs_oracles else {}

    rows: list[dict[str, Any]] = []
    timings: list[dict[str, Any]] = []
    if framework == "cascade":
        coarse = (
            SidecarDetector(args.sidecar_coarse, ROLE_COARSE, cfg.coarse_input_size)
            if args.sidecar_coarse
            else oracle_from_profile(profiles[ROLE_COARSE], cfg.coarse_input_size)
        )
        fine = (
            SidecarDetector(args.sidecar_fine, ROLE_FINE, cfg.fine_input_size)
            if args.sidecar_fine
            else oracle_from_profile(profiles[ROLE_FINE], cfg.fine_input_size)
        )
        for scene in scenes:
            result = run_cascade(coarse, fine, scene, cfg, threads=threads)
            rows.append(result.to_json_dict())
            timings.append({"ref": result.ref, **result.timings})
    else:
        role = ROLE_SINGLE_I if framework == "single-I" else ROLE_SINGLE_II
        model = oracle_from_profile(profiles[role], cfg.coarse_input_size)
        for scene in scenes:
            rows.append(run_single(model, scene, tau_single).to_json_dict())

    n = write_jsonl(args.out, rows)
    _write_meta(
        args.out,
        "run",
        {
            "framework": framework,
            "seed": seed,
            "tau_single": tau_single,
            "threads": threads,
            **cfg.to_json_dict(),
        },
    )
    if args.timings_out and timings:
        write_jsonl(args.timings_out, timings)
    print(f"wrote {n} decisions to {args.out}")
    return EXIT_OK


# --- evaluate ----------------------------------------------------------------


def _read_decision_map(path: str) -> dict[int, bool | None]:
    decisions: dict[int, bool | None] = {}
    for row in read_jsonl(path):
        sid = row.get("scene_id")
        if sid is None:
            continue
        decisions[int(sid)] = None if "error" in row else bool(row["decision"])
    return decisions


def _stats_from_decisions(name: str, scenes, decisions: dict[int, bool | None]) -> FrameworkStats:
    tp = fp = tn = fn = errors = 0
    for scene in scenes:
        d = decisions.get(scene.scene_id)
        if d is None:
            errors += 1
        elif d and scene.label:
            tp += 1
        elif d:
            fp += 1
        elif scene.label:
            fn += 1
        else:
            tn += 1
    return FrameworkStats(name=name, tp=tp, fp=fp, tn=tn, fn=fn, errors=errors)


def _cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _resolve_pipeline(args)
    seed = _resolve_scalar(args, "seed", 0)
    tau_single = _resolve_scalar(args, "tau_single", DEFAULT_TAU_SINGLE)
    scenes = read_scene_manifest(args.scenes)
    if not scenes:
        raise UsageError(f"scene manifest {args.scenes} is empty")
    class_counts: dict[str, int] = {}
    for s in scenes:
        class_counts[s.scene_class] = class_counts.get(s.scene_class, 0) + 1
    summary = {f"class_{k}": v for k, v in sorted(class_counts.items())}
    summary["total"] = len(scenes)
    echo: dict[str, Any] = {"seed": seed, "tau_single": tau_single, **cfg.to_json_dict()}

    if args.calibrate_targets:
        try:
            t = [float(x) for x in args.calibrate_targets.split(",")]
        except ValueError as exc:
            raise UsageError(f"--calibrate-targets: {exc}") from exc
        if len(t) != 3:
            raise UsageError("--calibrate-targets: expected three comma-separated accuracies")
        targets = TableTargets(single_i=t[0], single_ii=t[1], cascade=t[2])
        counts = ClassCounts(
            n_b=class_counts.get("b", 0),
            n_a=class_counts.get("a", 0),
            n_c=class_counts.get("c", 0),
        )
        calibration = calibrate_profiles(targets, counts, cfg, rng_seed=seed)
        if args.profiles_out:
            write_json(args.profiles_out, calibration.to_json_dict())
        frameworks = build_table_frameworks(calibration.profiles, cfg, tau_single)
        echo["calibrate_targets"] = args.calibrate_targets
        echo["expected_accuracy"] = calibration.expected_accuracy
        report = evaluate(frameworks, scenes, model_label=args.model_label, config_echo=echo)
    elif args.decisions:
        stats = []
        for spec in args.decisions:
            name, _, path = spec.partition("=")
            if not path:
                raise UsageError(f"--decisions expects NAME=PATH, got {spec!r}")
            stats.append(_stats_from_decisions(name, scenes, _read_decision_map(path)))
        report = EvalReport(
            model_label=args.model_label,
            frameworks=tuple(stats),
            corpus_summary=summary,
            config_echo=echo,
        )
    else:
        raise UsageError("evaluate needs --decisions NAME=PATH or --calibrate-targets A1,A2,AC")

    write_json(args.out, report.to_json_dict())
    _write_meta(args.out, "evaluate", echo)
    for f in report.frameworks:
        print(f"{f.name}: accuracy={f.accuracy:.4f} (errors={f.errors})")
    return EXIT_OK


# --- report ------------------------------------------------------------------


def _cmd_report(args: argparse.Namespace) -> int:
    reports = []
    for path in args.inputs:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        for item in payload if isinstance(payload, list) else [payload]:
            reports.append(EvalReport.from_json_dict(item))
    try:
        rendered = render_report(reports, fmt=args.format)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.out:
        Path(args.out).write_text(rendered, encoding="utf-8")
    else:
        sys.stdout.write(rendered)
    return EXIT_OK


# --- parser ------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="c2fdet", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a symbolic labeled scene corpus")
    p.add_argument("--b", type=int, default=0, help="genuine-action scenes (positives)")
    p.add_argument("--a", type=int, default=0, help="pose-without-object scenes")
    p.add_argument("--c", type=int, default=0, help="object-without-pose scenes")
    p.add_argument("--plain", type=int, default=0, help="plain negative scenes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image-width", type=float, default=1920.0)
    p.add_argument("--image-height", type=float, default=1080.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("derive-fine", help="derive the fine-stage dataset from coarse regions")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenes", help="symbolic scene manifest (ground-truth annotations)")
    src.add_argument("--annotations", help="annotation manifest JSONL")
    p.add_argument("--source", choices=[SOURCE_ANNOTATION, SOURCE_DETECTION], default=SOURCE_ANNOTATION)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--lint-out", help="write the lint report JSON here")
    _add_pipeline_flags(p)
    p.set_defaults(func=_cmd_derive_fine)

    p = sub.add_parser("run", help="run a detection framework over a scene manifest")
    p.add_argument("--scenes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--framework", choices=["cascade", "single-I", "single-II"], default="cascade")
    p.add_argument("--single", choices=["I", "II"], help="shorthand for --framework single-I/II")
    p.add_argument("--profiles", help="oracle profiles JSON (from evaluate --profiles-out)")
    p.add_argument("--perfect-oracles", action="store_true", help="use always-correct oracles")
    p.add_argument("--sidecar-coarse", help="external coarse detector: stdio:CMD or tcp:HOST:PORT")
    p.add_argument("--sidecar-fine", help="external fine detector endpoint")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--tau-single", type=float, dest="tau_single")
    p.add_argument("--timings-out", help="write per-image stage timings here (non-deterministic)")
    _add_pipeline_flags(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("evaluate", help="score frameworks against scene labels")
    p.add_argument("--scenes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--decisions", action="append", metavar="NAME=PATH", help="score a decisions file")
    p.add_argument("--calibrate-targets", metavar="A1,A2,AC", help="calibrate oracles to these accuracies and evaluate all three frameworks")
    p.add_argument("--model-label", default="", help="label for the Models column")
    p.add_argument("--profiles-out", help="write calibrated profiles JSON here")
    p.add_argument("--seed", type=int)
    p.add_argument("--tau-single", type=float, dest="tau_single")
    _add_pipeline_flags(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="render an evaluation report")
    p.add_argument("--in", dest="inputs", action="append", required=True, metavar="REPORT_JSON")
    p.add_argument("--format", choices=["text", "json", "markdown"], default="text")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except CorpusSpecError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except CalibrationError as exc:
        sys.stderr.write(f"calibration infeasible: {exc}\n")
        return EXIT_CALIBRATION
    except DetectorTransportError as exc:
        sys.stderr.write(f"detector transport error: {exc}\n")
        return EXIT_TRANSPORT
    except OSError as exc:
        sys.stderr.write(f"i/o error: {exc}\n")
        return EXIT_IO
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
