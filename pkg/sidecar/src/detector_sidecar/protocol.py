"""Request validation and response serialization for the detector wire
protocol (newline-delimited JSON, version 1).

Error message strings are part of the conformance contract: the golden
request/response suite compares responses byte for byte, so do not
reword them casually.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any

PROTOCOL_VERSION = 1

ROLES = ("coarse", "fine")


class RequestError(Exception):
    """Invalid request; `request_id` is echoed when it could be extracted."""

    def __init__(self, message: str, request_id: Any = None):
        super().__init__(message)
        self.request_id = request_id


@dataclass(frozen=True)
class Request:
    request_id: Any
    role: str
    image: str
    region: list[float] | None
    input_size: int


def dumps_canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def detections_response(request_id: Any, detections: list[dict]) -> str:
    return dumps_canonical({"v": PROTOCOL_VERSION, "id": request_id, "detections": detections})


def error_response(request_id: Any, message: str) -> str:
    return dumps_canonical({"v": PROTOCOL_VERSION, "id": request_id, "error": message})


def parse_request(line: str) -> Request:
    """Validate one request line.

    Raises RequestError (with the request id when present) for anything
    that parses as JSON but violates the protocol, and ValueError for
    lines that are not JSON at all.
    """
    payload = json.loads(line)  # ValueError propagates: not even JSON
    if not isinstance(payload, dict):
        raise RequestError("request is not an object")
    request_id = payload.get("id")
    version = payload.get("v")
    if version != PROTOCOL_VERSION:
        raise RequestError(f"unsupported protocol version: {version!r}", request_id)
    role = payload.get("role")
    if role not in ROLES:
        raise RequestError(f"unknown role: {role!r}", request_id)
    if "image" not in payload:
        raise RequestError("missing field: 'image'", request_id)
    image = payload["image"]
    if not isinstance(image, str):
        raise RequestError("field 'image' must be a string", request_id)
    region = payload.get("region")
    if region is not None:
        if (
            not isinstance(region, list)
            or len(region) != 4
            or not all(isinstance(v, (int, float)) and math.isfinite(v) for v in region)
        ):
            raise RequestError(f"invalid region: {region!r}", request_id)
        x0, y0, x1, y1 = region
        if x0 >= x1 or y0 >= y1:
            raise RequestError(f"invalid region: {region!r}", request_id)
        region = [float(v) for v in region]
    if role == "fine" and region is None:
        raise RequestError("region required for fine role", request_id)
    if "input_size" not in payload:
        raise RequestError("missing field: 'input_size'", request_id)
    input_size = payload["input_size"]
    if not isinstance(input_size, int) or isinstance(input_size, bool) or input_size <= 0:
        raise RequestError(f"invalid input_size: {input_size!r}", request_id)
    return Request(
        request_id=request_id, role=role, image=image, region=region, input_size=input_size
    )


def quantize_region(region: list[float] | None) -> tuple[int, ...] | None:
    """Round region coordinates to integers (half away from zero) so that
    fixture lookups are stable across float formatting differences."""
    if region is None:
        return None
    return tuple(int(math.floor(v + 0.5)) for v in region)
