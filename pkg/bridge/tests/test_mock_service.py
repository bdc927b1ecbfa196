import io
import json
import socket
import subprocess
import sys

import numpy as np
import pytest

from denoiser_bridge.mock import MockDenoiser, canonical_alpha_bar
from denoiser_bridge.protocol import DenoiseRequest
from denoiser_bridge.service import serve_stream


def test_canonical_alpha_bar_endpoints():
    assert canonical_alpha_bar(0, 200) == 1.0
    assert 0.0 < canonical_alpha_bar(200, 200) < 1e-4
    # subset of the 1000-step grid: t of a T-run hits index t * 1000 / T
    assert canonical_alpha_bar(40, 200) == canonical_alpha_bar(200, 1000)


def test_mock_zero_input_gives_zero_output():
    req = DenoiseRequest(t=5, total_steps=10,
                         x=np.zeros((3, 3, 1), dtype=np.float32))
    eps = MockDenoiser().denoise(req)
    assert not eps.any()
    assert eps.shape == (3, 3, 1)


def test_mock_is_pure_function_of_input_and_step():
    x = np.random.default_rng(1).standard_normal((4, 4, 2)).astype(np.float32)
    a = MockDenoiser().denoise(DenoiseRequest(3, 10, x))
    b = MockDenoiser().denoise(DenoiseRequest(3, 10, x.copy()))
    c = MockDenoiser().denoise(DenoiseRequest(4, 10, x))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_mock_response_shape_echoes_request():
    for shape in ((1, 1, 1), (5, 3, 2), (2, 9, 4)):
        x = np.ones(shape, dtype=np.float32)
        reader = io.BytesIO(
            json.dumps({
                "op": "denoise", "t": 1, "T": 4, "shape": list(shape),
            }).encode() + b"\n" + x.tobytes()
        )
        writer = io.BytesIO()
        serve_stream(reader, writer, MockDenoiser())
        writer.seek(0)
        assert json.loads(writer.readline())["shape"] == list(shape)
        assert len(writer.read()) == 4 * x.size


def _request_over_tcp(port: int, header: dict, payload: bytes = b""):
    with socket.create_connection(("127.0.0.1", port)) as sock:
        stream = sock.makefile("rwb")
        stream.write(json.dumps(header).encode() + b"\n" + payload)
        stream.flush()
        reply = json.loads(stream.readline())
        body = b""
        if reply.get("status") == "ok" and "shape" in reply:
            expected = 4 * int(np.prod(reply["shape"]))
            while len(body) < expected:
                chunk = stream.read(expected - len(body))
                if not chunk:
                    break
                body += chunk
        return reply, body


@pytest.fixture(scope="module")
def tcp_service():
    proc = subprocess.Popen(
        [sys.executable, "-m", "denoiser_bridge", "--mode", "tcp", "--port", "0"],
        stdout=subprocess.PIPE,
    )
    banner = proc.stdout.readline().decode()
    assert banner.startswith("LISTENING ")
    port = int(banner.split()[1])
    yield port
    proc.terminate()
    proc.wait(timeout=10)


def test_tcp_service_denoises(tcp_service):
    x = np.random.default_rng(2).standard_normal((4, 5, 1)).astype("<f4")
    header = {"op": "denoise", "t": 6, "T": 20, "shape": [4, 5, 1]}
    reply, body = _request_over_tcp(tcp_service, header, x.tobytes())
    assert reply["status"] == "ok"
    got = np.frombuffer(body, dtype="<f4").reshape(4, 5, 1)
    expected = MockDenoiser().denoise(DenoiseRequest(6, 20, x))
    assert got.tobytes() == expected.astype("<f4").tobytes()


def test_tcp_service_survives_protocol_violation(tcp_service):
    with socket.create_connection(("127.0.0.1", tcp_service)) as sock:
        stream = sock.makefile("rwb")
        stream.write(b"garbage that is not json\n")
        stream.flush()
        assert json.loads(stream.readline())["status"] == "error"
        # connection still usable afterwards
        stream.write(json.dumps({"op": "capabilities"}).encode() + b"\n")
        stream.flush()
        assert json.loads(stream.readline())["status"] == "ok"


def test_tcp_service_capabilities(tcp_service):
    reply, _ = _request_over_tcp(tcp_service, {"op": "capabilities"})
    assert reply["capabilities"]["accepts_conditions"] is False
    assert reply["capabilities"]["max_concurrency"] == 1
