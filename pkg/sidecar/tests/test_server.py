import io
import json
import socket
import subprocess
import sys
import threading

import pytest

from detector_sidecar.adapter import ModelAdapter
from detector_sidecar.fixtures import FixtureError, FixtureTable
from detector_sidecar.server import RequestHandler, serve_stream, serve_tcp


def request_line(request_id, role="coarse", image="scene:0", region=None, input_size=1280, v=1):
    return json.dumps(
        {"v": v, "id": request_id, "role": role, "image": image, "region": region, "input_size": input_size}
    )


def make_table():
    table = FixtureTable()
    table.add(
        "scene:0",
        "coarse",
        None,
        [{"label": "coarse_pose", "conf": 0.9, "box": [10.0, 10.0, 50.0, 50.0]}],
    )
    table.add(
        "scene:0",
        "fine",
        [85, 90, 430, 490],
        [{"label": "fine_cigarette", "conf": 0.8, "box": [100.0, 100.0, 120.0, 115.0]}],
    )
    return table


def handler():
    return RequestHandler(table=make_table(), diagnostics=lambda msg: None)


class TestHandler:
    def test_fixture_hit_echoes_id(self):
        out = handler().handle_line(request_line(7))
        payload = json.loads(out)
        assert payload["id"] == 7
        assert len(payload["detections"]) == 1

    def test_region_quantization_tolerates_float_noise(self):
        line = request_line(1, role="fine", region=[85.2, 90.4, 429.5, 489.6], input_size=320)
        payload = json.loads(handler().handle_line(line))
        assert len(payload["detections"]) == 1

    def test_miss_is_empty_not_error(self):
        payload = json.loads(handler().handle_line(request_line(2, image="scene:99")))
        assert payload["detections"] == []

    def test_fine_requires_region(self):
        payload = json.loads(handler().handle_line(request_line(3, role="fine", input_size=320)))
        assert payload["error"] == "region required for fine role"
        assert payload["id"] == 3

    def test_unknown_version_keeps_serving(self):
        h = handler()
        bad = json.loads(h.handle_line(request_line(4, v=2)))
        assert "unsupported protocol version" in bad["error"]
        good = json.loads(h.handle_line(request_line(5)))
        assert "detections" in good

    def test_unparseable_line_yields_no_response(self):
        diags = []
        h = RequestHandler(table=make_table(), diagnostics=diags.append)
        assert h.handle_line("not json at all {{{") is None
        assert len(diags) == 1

    def test_blank_line_ignored(self):
        assert handler().handle_line("   \n") is None

    def test_invalid_region_shape(self):
        payload = json.loads(handler().handle_line(request_line(6, region=[1, 2, 3])))
        assert "invalid region" in payload["error"]

    def test_unknown_fields_ignored(self):
        line = json.dumps(
            {"v": 1, "id": 8, "role": "coarse", "image": "scene:0", "region": None,
             "input_size": 1280, "extra": {"x": 1}}
        )
        assert "detections" in json.loads(handler().handle_line(line))

    def test_needs_exactly_one_backend(self):
        with pytest.raises(ValueError):
            RequestHandler()
        with pytest.raises(ValueError):
            RequestHandler(table=make_table(), adapter=ModelAdapter())


class TestFixtureTable:
    def test_load_validates_confidence(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            json.dumps(
                {"key": {"image": "x", "role": "coarse", "region": None},
                 "detections": [{"label": "p", "conf": 1.5, "box": [0, 0, 1, 1]}]}
            )
            + "\n"
        )
        with pytest.raises(FixtureError):
            FixtureTable.load(path)

    def test_load_validates_box(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            json.dumps(
                {"key": {"image": "x", "role": "coarse", "region": None},
                 "detections": [{"label": "p", "conf": 0.5, "box": [5, 0, 5, 1]}]}
            )
            + "\n"
        )
        with pytest.raises(FixtureError):
            FixtureTable.load(path)


class TestAdapterMode:
    def test_adapter_predictions_served(self):
        class Fixed(ModelAdapter):
            def predict(self, image, role, region, input_size):
                return [{"label": "coarse_pose", "conf": 0.5, "box": [0.0, 0.0, 5.0, 5.0]}]

        h = RequestHandler(adapter=Fixed())
        payload = json.loads(h.handle_line(request_line(1)))
        assert payload["detections"][0]["conf"] == 0.5

    def test_default_adapter_answers_with_error_not_crash(self):
        h = RequestHandler(adapter=ModelAdapter())
        payload = json.loads(h.handle_line(request_line(2)))
        assert "detector failure" in payload["error"]
        assert payload["id"] == 2


class TestOrderingStress:
    def test_1000_pipelined_requests_in_order(self, tmp_path):
        fixtures = tmp_path / "table.jsonl"
        fixtures.write_text(
            json.dumps(
                {"key": {"image": "scene:0", "role": "coarse", "region": None},
                 "detections": [{"label": "coarse_pose", "conf": 0.9, "box": [0.0, 0.0, 5.0, 5.0]}]}
            )
            + "\n"
        )
        lines = "".join(request_line(i) + "\n" for i in range(1000))
        proc = subprocess.run(
            [sys.executable, "-m", "detector_sidecar.cli", "--fixtures", str(fixtures)],
            input=lines.encode(),
            capture_output=True,
            timeout=60,
        )
        assert proc.returncode == 0
        out = proc.stdout.decode().splitlines()
        assert len(out) == 1000
        assert [json.loads(line)["id"] for line in out] == list(range(1000))


class TestTcpTransport:
    def test_socket_roundtrip(self):
        h = handler()
        port_holder = {}

        srv_sock = socket.create_server(("127.0.0.1", 0))
        port_holder["port"] = srv_sock.getsockname()[1]
        srv_sock.close()  # free it for serve_tcp

        t = threading.Thread(
            target=serve_tcp,
            args=(h, "127.0.0.1", port_holder["port"]),
            kwargs={"max_connections": 1},
            daemon=True,
        )
        t.start()
        for _ in range(50):
            try:
                conn = socket.create_connection(("127.0.0.1", port_holder["port"]), timeout=0.2)
                break
            except OSError:
                import time

                time.sleep(0.05)
        else:
            pytest.fail("could not connect to sidecar socket")
        with conn:
            wfile = conn.makefile("w", encoding="utf-8")
            rfile = conn.makefile("r", encoding="utf-8")
            wfile.write(request_line(1) + "\n")
            wfile.flush()
            payload = json.loads(rfile.readline())
            assert payload["id"] == 1 and len(payload["detections"]) == 1
        t.join(timeout=5)


class TestStreamLoop:
    def test_response_count(self):
        requests = "\n".join(
            [request_line(0), "garbage", request_line(1), "", request_line(2, v=9)]
        )
        out = io.StringIO()
        n = serve_stream(
            RequestHandler(table=make_table(), diagnostics=lambda m: None),
            io.StringIO(requests + "\n"),
            out,
        )
        # garbage and the blank line yield no response; v=9 yields an error
        assert n == 3
        assert len(out.getvalue().splitlines()) == 3
