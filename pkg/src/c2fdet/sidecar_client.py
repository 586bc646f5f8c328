"""Client for external detector processes speaking the sidecar protocol.

Wire format: newline-delimited JSON over a stdio pipe or a TCP stream.

  request:  {"v":1,"id":<int>,"role":"coarse"|"fine","image":<ref>,
             "region":[x0,y0,x1,y1]|null,"input_size":<int>}
  response: {"v":1,"id":<int>,"detections":[{"label":..,"conf":..,"box":[..]}]}
         or {"v":1,"id":<int>,"error":<string>}

ids must echo, one response per request, unknown fields are ignored.
Detections for a region-restricted request are expected in the crop frame
of that region's letterbox transform; projection back to the global frame
is the cascade's job, not the client's.

The client serializes request/response pairs over its single connection,
so callers may invoke detect() concurrently from multiple threads.
"""

from __future__ import annotations

import json
import queue
import shlex
import socket
import subprocess
import threading
from dataclasses import dataclass
from typing import Any

from .detectors import (
    DEFAULT_COARSE_INPUT_SIZE,
    DEFAULT_FINE_INPUT_SIZE,
    Detection,
    DetectorHandle,
    DetectorTransportError,
    ROLE_COARSE,
    ROLE_FINE,
)
from .geometry import Box
from .jsonl import dumps_canonical

PROTOCOL_VERSION = 1


class SidecarTimeoutError(DetectorTransportError):
    """No response within the configured timeout."""


class SidecarProtocolError(DetectorTransportError):
    """Malformed or invariant-violating response."""


class SidecarVersionError(DetectorTransportError):
    """Peer speaks a different protocol version."""


class SidecarRemoteError(DetectorTransportError):
    """The sidecar answered with an explicit error response."""


@dataclass(frozen=True)
class SidecarEndpoint:
    """Where the sidecar lives: `stdio:<command line>` or `tcp:<host>:<port>`."""

    kind: str  # "stdio" | "tcp"
    argv: tuple[str, ...] = ()
    host: str = ""
    port: int = 0

    @classmethod
    def parse(cls, spec: str) -> "SidecarEndpoint":
        if spec.startswith("tcp:"):
            rest = spec[len("tcp:") :]
            host, _, port = rest.rpartition(":")
            if not host or not port.isdigit():
                raise ValueError(f"bad tcp endpoint {spec!r}, expected tcp:<host>:<port>")
            return cls(kind="tcp", host=host, port=int(port))
        if spec.startswith("stdio:"):
            spec = spec[len("stdio:") :]
        argv = tuple(shlex.split(spec))
        if not argv:
            raise ValueError("empty sidecar command")
        return cls(kind="stdio", argv=argv)


class _StdioTransport:
    """Line transport over a child process's stdin/stdout."""

    def __init__(self, argv: tuple[str, ...]):
        try:
            self._proc = subprocess.Popen(
                list(argv),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise DetectorTransportError(f"cannot start sidecar {argv!r}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def send_line(self, line: str) -> None:
        if self._proc.poll() is not None:
            raise DetectorTransportError("sidecar process has exited")
        assert self._proc.stdin is not None
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise DetectorTransportError(f"sidecar pipe broken: {exc}") from exc

    def recv_line(self, timeout: float) -> str:
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise SidecarTimeoutError(f"no sidecar response within {timeout}s") from None
        if line is None:
            raise DetectorTransportError("sidecar closed its output stream")
        return line

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                if self._proc.stdin:
                    self._proc.stdin.close()
                self._proc.wait(timeout=2.0)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()


class _TcpTransport:
    def __init__(self, host: str, port: int, timeout: float):
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise DetectorTransportError(f"cannot connect to sidecar {host}:{port}: {exc}") from exc
        self._rfile = self._sock.makefile("r", encoding="utf-8")
        self._wfile = self._sock.makefile("w", encoding="utf-8")

    def send_line(self, line: str) -> None:
        try:
            self._wfile.write(line + "\n")
            self._wfile.flush()
        except OSError as exc:
            raise DetectorTransportError(f"sidecar socket write failed: {exc}") from exc

    def recv_line(self, timeout: float) -> str:
        self._sock.settimeout(timeout)
        try:
            line = self._rfile.readline()
        except socket.timeout:
            raise SidecarTimeoutError(f"no sidecar response within {timeout}s") from None
        except OSError as exc:
            raise DetectorTransportError(f"sidecar socket read failed: {exc}") from exc
        if not line:
            raise DetectorTransportError("sidecar closed the connection")
        return line

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


def build_request(
    request_id: int, role: str, image: str, region: Box | None, input_size: int
) -> str:
    return dumps_canonical(
        {
            "v": PROTOCOL_VERSION,
            "id": request_id,
            "role": role,
            "image": image,
            "region": None if region is None else region.to_list(),
            "input_size": input_size,
        }
    )


def parse_response(line: str, expected_id: int) -> list[Detection]:
    """Parse one response line; raises instead of ever dropping detections."""
    try:
        payload = json.loads(line)
    except json.JSONDecodeError as exc:
        raise SidecarProtocolError(f"malformed response JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise SidecarProtocolError(f"response is not an object: {line.strip()!r}")
    version = payload.get("v")
    if version != PROTOCOL_VERSION:
        raise SidecarVersionError(f"protocol version mismatch: got {version!r}")
    if payload.get("id") != expected_id:
        raise SidecarProtocolError(
            f"response id {payload.get('id')!r} does not echo request id {expected_id}"
        )
    if "error" in payload:
        raise SidecarRemoteError(f"sidecar error: {payload['error']}")
    raw = payload.get("detections")
    if not isinstance(raw, list):
        raise SidecarProtocolError("response carries neither detections nor error")
    out: list[Detection] = []
    for entry in raw:
        try:
            out.append(
                Detection(
                    label=str(entry["label"]),
                    confidence=float(entry["conf"]),
                    box=Box.from_list(entry["box"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SidecarProtocolError(f"invalid detection {entry!r}: {exc}") from exc
    return out


class SidecarDetector(DetectorHandle):
    """DetectorHandle backed by an external process over the wire protocol."""

    def __init__(
        self,
        endpoint: SidecarEndpoint | str,
        role: str,
        input_size: int | None = None,
        timeout_s: float = 10.0,
    ):
        if role not in (ROLE_COARSE, ROLE_FINE):
            raise ValueError(f"sidecar role must be coarse or fine, got {role!r}")
        if isinstance(endpoint, str):
            endpoint = SidecarEndpoint.parse(endpoint)
        self.endpoint = endpoint
        self.role = role
        self.input_size = input_size or (
            DEFAULT_COARSE_INPUT_SIZE if role == ROLE_COARSE else DEFAULT_FINE_INPUT_SIZE
        )
        self.timeout_s = timeout_s
        self.identifier = f"sidecar:{role}"
        self._lock = threading.Lock()
        self._transport: Any = None
        self._next_id = 0

    def _ensure_transport(self):
        if self._transport is None:
            if self.endpoint.kind == "tcp":
                self._transport = _TcpTransport(self.endpoint.host, self.endpoint.port, self.timeout_s)
            else:
                self._transport = _StdioTransport(self.endpoint.argv)
        return self._transport

    def detect(self, target: Any, region: Box | None = None) -> list[Detection]:
        image = getattr(target, "ref", None)
        if image is None:
            image = str(target)
        with self._lock:
            transport = self._ensure_transport()
            request_id = self._next_id
            self._next_id += 1
            transport.send_line(build_request(request_id, self.role, image, region, self.input_size))
            line = transport.recv_line(self.timeout_s)
        dets = parse_response(line, request_id)
        frame = "global" if region is None else "crop"
        return [d.with_box(d.box, frame=frame) for d in dets]

    def close(self) -> None:
        with self._lock:
            if self._transport is not None:
                self._transport.close()
                self._transport = None

    def __enter__(self) -> "SidecarDetector":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
