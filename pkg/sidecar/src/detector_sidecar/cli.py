"""detector-sidecar: serve canned or real detections over the wire protocol.

Fixture mode replays a detection table (for integration tests and
protocol conformance); adapter mode loads a ModelAdapter subclass given
as a dotted path, e.g. --adapter mypackage.inference:TrainedCoarseModel.
"""

from __future__ import annotations

import argparse
import importlib
import sys

from .adapter import ModelAdapter
from .fixtures import FixtureError, FixtureTable
from .server import RequestHandler, serve_stdio, serve_tcp


def _load_adapter(spec: str) -> ModelAdapter:
    module_name, _, attr = spec.partition(":")
    if not module_name or not attr:
        raise ValueError(f"--adapter expects module.path:ClassName, got {spec!r}")
    obj = getattr(importlib.import_module(module_name), attr)
    adapter = obj() if isinstance(obj, type) else obj
    if not isinstance(adapter, ModelAdapter):
        raise ValueError(f"{spec!r} is not a ModelAdapter")
    return adapter


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="detector-sidecar", description=__doc__)
    parser.add_argument("--mode", choices=["fixture", "adapter"], default="fixture")
    parser.add_argument("--fixtures", help="fixture table JSONL (fixture mode)")
    parser.add_argument("--adapter", help="ModelAdapter as module.path:ClassName (adapter mode)")
    parser.add_argument("--transport", choices=["stdio", "tcp"], default="stdio")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=0)
    parser.add_argument(
        "--max-connections", type=int, default=None, help="tcp only: stop after N connections"
    )
    args = parser.parse_args(argv)

    try:
        if args.mode == "fixture":
            if not args.fixtures:
                parser.error("--mode fixture requires --fixtures")
            handler = RequestHandler(table=FixtureTable.load(args.fixtures))
        else:
            if not args.adapter:
                parser.error("--mode adapter requires --adapter")
            handler = RequestHandler(adapter=_load_adapter(args.adapter))
    except (FixtureError, ValueError, OSError, ImportError, AttributeError) as exc:
        print(f"detector-sidecar: {exc}", file=sys.stderr)
        return 2

    if args.transport == "stdio":
        serve_stdio(handler)
    else:
        serve_tcp(handler, args.host, args.port, args.max_connections)
    return 0


if __name__ == "__main__":
    sys.exit(main())
