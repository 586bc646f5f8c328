"""Single-threaded request loop over stdio or a TCP socket.

One response per request, ids echoed, order preserved. Bad input never
crashes the process: schema violations produce error responses, and lines
that are not JSON at all produce a stderr diagnostic and no response.
"""

from __future__ import annotations

import json
import socket
import sys
from typing import IO, Callable

from .adapter import ModelAdapter
from .fixtures import FixtureTable
from .protocol import RequestError, detections_response, error_response, parse_request


class RequestHandler:
    """Maps request lines to response lines (None = no response)."""

    def __init__(
        self,
        table: FixtureTable | None = None,
        adapter: ModelAdapter | None = None,
        diagnostics: Callable[[str], None] | None = None,
    ):
        if (table is None) == (adapter is None):
            raise ValueError("provide exactly one of fixture table or model adapter")
        self._table = table
        self._adapter = adapter
        self._diag = diagnostics or (lambda msg: print(msg, file=sys.stderr, flush=True))

    def handle_line(self, line: str) -> str | None:
        line = line.strip()
        if not line:
            return None
        try:
            request = parse_request(line)
        except RequestError as exc:
            return error_response(exc.request_id, str(exc))
        except (json.JSONDecodeError, ValueError):
            self._diag(f"sidecar: ignoring unparseable line: {line[:120]!r}")
            return None

        try:
            if self._table is not None:
                detections = self._table.lookup(request.image, request.role, request.region)
            else:
                detections = self._adapter.predict(
                    request.image, request.role, request.region, request.input_size
                )
        except Exception as exc:  # a model failure must answer, not crash
            return error_response(request.request_id, f"detector failure: {exc}")
        return detections_response(request.request_id, detections)


def serve_stream(handler: RequestHandler, rfile: IO[str], wfile: IO[str]) -> int:
    """Pump rfile lines through the handler until EOF; returns #responses."""
    responses = 0
    for line in rfile:
        out = handler.handle_line(line)
        if out is not None:
            wfile.write(out + "\n")
            wfile.flush()
            responses += 1
    return responses


def serve_stdio(handler: RequestHandler) -> int:
    return serve_stream(handler, sys.stdin, sys.stdout)


def serve_tcp(handler: RequestHandler, host: str, port: int, max_connections: int | None = None):
    """Accept connections sequentially, one request loop per connection.

    max_connections bounds the accept loop (useful for tests); None serves
    until the process is killed.
    """
    srv = socket.create_server((host, port))
    try:
        served = 0
        print(f"sidecar: listening on {host}:{srv.getsockname()[1]}", file=sys.stderr, flush=True)
        while max_connections is None or served < max_connections:
            conn, _ = srv.accept()
            with conn:
                rfile = conn.makefile("r", encoding="utf-8")
                wfile = conn.makefile("w", encoding="utf-8")
                serve_stream(handler, rfile, wfile)
            served += 1
    finally:
        srv.close()
