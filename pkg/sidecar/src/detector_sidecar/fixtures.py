"""Canned detection tables for fixture-replay mode.

File format: JSONL, one entry per line:

  {"key": {"image": <str>, "role": "coarse"|"fine",
           "region": [x0,y0,x1,y1] | null},
   "detections": [{"label": <str>, "conf": <0..1>, "box": [x0,y0,x1,y1]}]}

Lookup keys quantize region coordinates to integers; a missing key
replays an empty detection list (a miss is a legitimate "nothing found",
not an error).
"""

from __future__ import annotations

import json
import math
from pathlib import Path

from .protocol import quantize_region

Key = tuple[str, str, tuple[int, ...] | None]


class FixtureError(ValueError):
    pass


def _validate_detection(det: dict, where: str) -> dict:
    if not isinstance(det, dict):
        raise FixtureError(f"{where}: detection must be an object")
    try:
        label = det["label"]
        conf = det["conf"]
        box = det["box"]
    except KeyError as exc:
        raise FixtureError(f"{where}: detection missing {exc}") from exc
    if not isinstance(label, str):
        raise FixtureError(f"{where}: label must be a string")
    if not isinstance(conf, (int, float)) or not 0.0 <= conf <= 1.0:
        raise FixtureError(f"{where}: confidence {conf!r} outside [0, 1]")
    if (
        not isinstance(box, list)
        or len(box) != 4
        or not all(isinstance(v, (int, float)) and math.isfinite(v) for v in box)
        or box[0] >= box[2]
        or box[1] >= box[3]
    ):
        raise FixtureError(f"{where}: invalid box {box!r}")
    return {"label": label, "conf": float(conf), "box": [float(v) for v in box]}


class FixtureTable:
    def __init__(self):
        self._entries: dict[Key, list[dict]] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def add(self, image: str, role: str, region, detections: list[dict], where: str = "entry"):
        key: Key = (image, role, quantize_region(region))
        self._entries[key] = [_validate_detection(d, where) for d in detections]

    def lookup(self, image: str, role: str, region) -> list[dict]:
        return self._entries.get((image, role, quantize_region(region)), [])

    @classmethod
    def load(cls, path: str | Path) -> "FixtureTable":
        table = cls()
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                where = f"{path}:{lineno}"
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise FixtureError(f"{where}: invalid JSON: {exc}") from exc
                try:
                    key = entry["key"]
                    table.add(
                        str(key["image"]),
                        str(key["role"]),
                        key.get("region"),
                        entry.get("detections", []),
                        where,
                    )
                except (KeyError, TypeError) as exc:
                    raise FixtureError(f"{where}: malformed fixture entry: {exc}") from exc
        return table
