import io
import json

import numpy as np

from denoiser_bridge.protocol import DenoiseRequest
from denoiser_bridge.service import serve_stream


class EchoDenoiser:
    def capabilities(self):
        return {"accepts_conditions": False, "deterministic": True,
                "max_concurrency": 1, "kinds": []}

    def denoise(self, request: DenoiseRequest):
        return request.x


def _talk(raw_requests: bytes, denoiser=None) -> io.BytesIO:
    reader = io.BytesIO(raw_requests)
    writer = io.BytesIO()
    serve_stream(reader, writer, denoiser or EchoDenoiser())
    writer.seek(0)
    return writer


def _denoise_request(x: np.ndarray, t=3, total=10, extra=None) -> bytes:
    header = {
        "op": "denoise", "t": t, "T": total, "shape": list(x.shape),
        "global_caption": "", "segments": [], "keypoint_map_ref": None,
    }
    if extra:
        header.update(extra)
    return json.dumps(header).encode() + b"\n" + x.astype("<f4").tobytes()


def test_round_trip_preserves_f32_bits_exactly():
    # include signed zeros, denormals, extremes and NaN bit patterns
    tricky = np.array(
        [0.0, -0.0, 1e-45, -1e-45, 3.4e38, -3.4e38, np.nan, np.inf, -np.inf,
         1.1, -2.2, 7e-12],
        dtype=np.float32,
    ).reshape(3, 4, 1)
    out = _talk(_denoise_request(tricky))
    reply = json.loads(out.readline())
    assert reply == {"status": "ok", "shape": [3, 4, 1]}
    assert out.read() == tricky.astype("<f4").tobytes()


def test_malformed_header_keeps_connection_alive():
    x = np.ones((2, 2, 1), dtype=np.float32)
    raw = b"this is not json\n" + _denoise_request(x)
    out = _talk(raw)
    first = json.loads(out.readline())
    assert first["status"] == "error"
    second = json.loads(out.readline())
    assert second["status"] == "ok"
    assert out.read() == x.astype("<f4").tobytes()


def test_unknown_op_reports_error():
    out = _talk(json.dumps({"op": "transmogrify"}).encode() + b"\n")
    assert json.loads(out.readline())["status"] == "error"


def test_bad_shape_reports_error():
    header = {"op": "denoise", "t": 1, "T": 5, "shape": [0, -3]}
    out = _talk(json.dumps(header).encode() + b"\n")
    assert json.loads(out.readline())["status"] == "error"


def test_bad_step_reports_error():
    header = {"op": "denoise", "t": 9, "T": 5, "shape": [1, 1, 1]}
    out = _talk(json.dumps(header).encode() + b"\n")
    assert json.loads(out.readline())["status"] == "error"


def test_capabilities_round_trip():
    out = _talk(json.dumps({"op": "capabilities"}).encode() + b"\n")
    reply = json.loads(out.readline())
    assert reply["status"] == "ok"
    assert reply["capabilities"]["deterministic"] is True


def test_sections_consumed_in_declared_order():
    x = np.full((2, 2, 1), 5.0, dtype=np.float32)
    kp = np.arange(4, dtype=np.float32).reshape(2, 2, 1)
    mask = np.array([[1, 0], [0, 1]], dtype=np.uint8)
    header = {
        "op": "denoise", "t": 2, "T": 10, "shape": [2, 2, 1],
        "global_caption": "hi",
        "segments": [{"caption": "seg", "mask_ref": [2, 2]}],
        "keypoint_map_ref": [2, 2, 1],
    }
    raw = (json.dumps(header).encode() + b"\n"
           + kp.astype("<f4").tobytes() + mask.tobytes()
           + x.astype("<f4").tobytes())

    seen = {}

    class Recorder(EchoDenoiser):
        def denoise(self, request):
            seen["kp"] = request.keypoint_map.copy()
            seen["segments"] = [(c, m.copy()) for c, m in request.segments]
            seen["caption"] = request.global_caption
            return request.x

    out = _talk(raw, Recorder())
    assert json.loads(out.readline())["status"] == "ok"
    assert out.read() == x.tobytes()
    assert np.array_equal(seen["kp"], kp)
    assert seen["caption"] == "hi"
    assert seen["segments"][0][0] == "seg"
    assert np.array_equal(seen["segments"][0][1], mask)
