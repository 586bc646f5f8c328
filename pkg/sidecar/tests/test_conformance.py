"""The golden request/response suite must pass bit-exactly."""

import io
import subprocess
import sys

from detector_sidecar.fixtures import FixtureTable
from detector_sidecar.server import RequestHandler, serve_stream


def test_golden_suite_in_process(conformance_dir):
    table = FixtureTable.load(conformance_dir / "fixture_table.jsonl")
    handler = RequestHandler(table=table, diagnostics=lambda msg: None)
    requests = (conformance_dir / "requests.jsonl").read_text(encoding="utf-8")
    expected = (conformance_dir / "responses.jsonl").read_text(encoding="utf-8")
    out = io.StringIO()
    serve_stream(handler, io.StringIO(requests), out)
    assert out.getvalue() == expected


def test_golden_suite_through_subprocess(conformance_dir):
    requests = (conformance_dir / "requests.jsonl").read_bytes()
    expected = (conformance_dir / "responses.jsonl").read_bytes()
    proc = subprocess.run(
        [
            sys.executable,
            "-m",
            "detector_sidecar.cli",
            "--mode",
            "fixture",
            "--fixtures",
            str(conformance_dir / "fixture_table.jsonl"),
        ],
        input=requests,
        capture_output=True,
        timeout=30,
    )
    assert proc.returncode == 0
    assert proc.stdout == expected
    # the one non-JSON request line must have produced a diagnostic
    assert b"unparseable" in proc.stderr
