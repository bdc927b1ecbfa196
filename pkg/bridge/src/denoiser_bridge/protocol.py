"""Server side of the denoiser wire protocol.

One request = a newline-terminated UTF-8 JSON header, then raw binary
sections in fixed order: keypoint map (float32 LE), one mask per segment
(uint8), the x_t payload (float32 LE).  Responses mirror the shape: a JSON
status line, then the float32 epsilon payload for successful denoise
requests.  A protocol violation yields an error status and the connection
stays alive.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class ServiceError(Exception):
    """Raised by denoisers for conditions reported as error responses."""


@dataclass
class DenoiseRequest:
    t: int
    total_steps: int
    x: np.ndarray  # float32, shape from the header
    global_caption: str = ""
    keypoint_map: np.ndarray | None = None
    segments: list[tuple[str, np.ndarray]] = field(default_factory=list)


def _read_exactly(stream, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            raise EOFError("connection closed mid-payload")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def _shape_size(ref, what: str) -> tuple[tuple[int, ...], int]:
    if (
        not isinstance(ref, (list, tuple))
        or not ref
        or any(not isinstance(d, int) or d < 1 for d in ref)
    ):
        raise ValueError(f"bad {what} {ref!r}")
    size = 1
    for d in ref:
        size *= d
    if size > 1 << 28:
        raise ValueError(f"{what} too large")
    return tuple(ref), size


def read_denoise_body(header: dict, stream) -> DenoiseRequest:
    """Consume the binary sections described by an already-parsed header."""
    t = header.get("t")
    total = header.get("T")
    if not isinstance(t, int) or not isinstance(total, int) or not 1 <= t <= total:
        raise ValueError(f"bad step t={t!r} T={total!r}")
    shape, count = _shape_size(header.get("shape"), "shape")

    keypoint_map = None
    kp_ref = header.get("keypoint_map_ref")
    if kp_ref is not None:
        kp_shape, kp_count = _shape_size(kp_ref, "keypoint_map_ref")
        keypoint_map = np.frombuffer(
            _read_exactly(stream, 4 * kp_count), dtype="<f4"
        ).reshape(kp_shape)

    segments = []
    for seg in header.get("segments", []):
        mask_shape, mask_count = _shape_size(seg.get("mask_ref"), "mask_ref")
        mask = np.frombuffer(
            _read_exactly(stream, mask_count), dtype=np.uint8
        ).reshape(mask_shape)
        segments.append((str(seg.get("caption", "")), mask))

    x = np.frombuffer(_read_exactly(stream, 4 * count), dtype="<f4").reshape(shape)
    return DenoiseRequest(
        t=t,
        total_steps=total,
        x=x,
        global_caption=str(header.get("global_caption", "")),
        keypoint_map=keypoint_map,
        segments=segments,
    )


def write_error(stream, message: str) -> None:
    stream.write(
        json.dumps({"status": "error", "error": message}).encode("utf-8") + b"\n"
    )
    stream.flush()


def write_capabilities(stream, capabilities: dict) -> None:
    stream.write(
        json.dumps({"status": "ok", "capabilities": capabilities}).encode("utf-8")
        + b"\n"
    )
    stream.flush()


def write_epsilon(stream, epsilon: np.ndarray) -> None:
    payload = np.ascontiguousarray(epsilon, dtype="<f4")
    header = {"status": "ok", "shape": list(payload.shape)}
    stream.write(json.dumps(header).encode("utf-8") + b"\n")
    stream.write(payload.tobytes())
    stream.flush()
