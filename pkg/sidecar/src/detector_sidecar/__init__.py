"""Reference sidecar process for the detector wire protocol."""

from .adapter import ModelAdapter
from .fixtures import FixtureError, FixtureTable
from .server import RequestHandler, serve_stdio, serve_stream, serve_tcp

__version__ = "0.1.0"

__all__ = [
    "FixtureError",
    "FixtureTable",
    "ModelAdapter",
    "RequestHandler",
    "serve_stdio",
    "serve_stream",
    "serve_tcp",
]
