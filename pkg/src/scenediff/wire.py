"""Client side of the external denoiser wire protocol.

A request is one newline-terminated UTF-8 JSON header followed by raw
binary sections, over either a spawned subprocess's standard streams or a
TCP connection.  Header fields: op, t, T, shape, global_caption,
segments (caption + mask_ref per segment) and keypoint_map_ref; binary
sections follow in the order keypoint map, masks in segment order, x_t
payload.  Tensors travel as little-endian float32, masks as uint8, so a
round trip preserves float32 payloads bit-exactly.
"""
from __future__ import annotations

import json
import shlex
import socket
import subprocess
from dataclasses import dataclass, field

import numpy as np

from .errors import BackendError
from .engine import BackendCapabilities, NoiseSchedule
from .geometry import ViewCondition


def _read_line(stream) -> bytes:
    line = stream.readline()
    if not line:
        raise BackendError("denoiser service closed the connection")
    return line


def _read_exactly(stream, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            raise BackendError("denoiser service truncated a payload")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


class WireTransport:
    """One sequential request/response channel to a denoiser service."""

    def __init__(self, reader, writer, proc: subprocess.Popen | None = None,
                 sock: socket.socket | None = None):
        self._reader = reader
        self._writer = writer
        self._proc = proc
        self._sock = sock

    @classmethod
    def open(cls, endpoint: str) -> "WireTransport":
        """Connect to `tcp://host:port` or spawn `stdio:command line`."""
        if endpoint.startswith("tcp://"):
            host, _, port = endpoint[len("tcp://"):].partition(":")
            if not port:
                raise BackendError(f"endpoint {endpoint!r} needs a port")
            sock = socket.create_connection((host, int(port)))
            stream = sock.makefile("rwb")
            return cls(stream, stream, sock=sock)
        if endpoint.startswith("stdio:"):
            cmd = shlex.split(endpoint[len("stdio:"):])
            if not cmd:
                raise BackendError("empty stdio command")
            proc = subprocess.Popen(
                cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE
            )
            return cls(proc.stdout, proc.stdin, proc=proc)
        raise BackendError(f"unsupported endpoint {endpoint!r}")

    def request(
        self, header: dict, sections: list[bytes] = ()
    ) -> tuple[dict, bytes]:
        self._writer.write(json.dumps(header).encode("utf-8") + b"\n")
        for section in sections:
            self._writer.write(section)
        self._writer.flush()
        try:
            reply = json.loads(_read_line(self._reader).decode("utf-8"))
        except json.JSONDecodeError as exc:
            raise BackendError(f"malformed response header: {exc}") from exc
        if reply.get("status") != "ok":
            raise BackendError(
                f"denoiser service error: {reply.get('error', 'unknown')}"
            )
        payload = b""
        if "shape" in reply:
            count = int(np.prod(reply["shape"]))
            payload = _read_exactly(self._reader, 4 * count)
        return reply, payload

    def close(self) -> None:
        for closer in (self._writer, self._reader):
            try:
                closer.close()
            except Exception:
                pass
        if self._sock is not None:
            self._sock.close()
        if self._proc is not None:
            self._proc.terminate()
            self._proc.wait(timeout=10)

    def __enter__(self) -> "WireTransport":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def encode_condition(condition: ViewCondition | None) -> tuple[dict, list[bytes]]:
    """Header fields and binary sections for a view condition."""
    if condition is None:
        return (
            {"global_caption": "", "segments": [], "keypoint_map_ref": None},
            [],
        )
    sections: list[bytes] = []
    kp = np.ascontiguousarray(condition.keypoint_map, dtype="<f4")
    sections.append(kp.tobytes())
    segments = []
    for pair in condition.dense_pairs:
        mask = np.ascontiguousarray(pair.mask, dtype=np.uint8)
        segments.append(
            {"caption": pair.caption, "mask_ref": list(mask.shape)}
        )
        sections.append(mask.tobytes())
    fields = {
        "global_caption": condition.full_text,
        "segments": segments,
        "keypoint_map_ref": list(kp.shape),
    }
    return fields, sections


@dataclass
class ExternalBackend:
    """Denoiser backend that forwards every step over the wire protocol.

    The service recomputes the canonical linear schedule from (t, T), so
    runs through this backend match the in-process reference only for
    schedules built with NoiseSchedule.linear.
    """

    endpoint: str
    _transport: WireTransport | None = field(default=None, repr=False)
    _capabilities: BackendCapabilities | None = field(default=None, repr=False)

    def _connection(self) -> WireTransport:
        if self._transport is None:
            self._transport = WireTransport.open(self.endpoint)
        return self._transport

    def capabilities(self) -> BackendCapabilities:
        if self._capabilities is None:
            reply, _ = self._connection().request({"op": "capabilities"})
            caps = reply.get("capabilities", {})
            self._capabilities = BackendCapabilities(
                accepts_conditions=bool(caps.get("accepts_conditions", False)),
                deterministic=bool(caps.get("deterministic", False)),
                max_concurrency=int(caps.get("max_concurrency", 1)),
                kinds=tuple(caps.get("kinds", ())),
            )
        return self._capabilities

    def predict_epsilon(
        self,
        x: np.ndarray,
        t: int,
        sched: NoiseSchedule,
        condition: ViewCondition | None = None,
    ) -> np.ndarray:
        payload = np.ascontiguousarray(x, dtype="<f4")
        fields, sections = encode_condition(condition)
        header = {
            "op": "denoise",
            "t": int(t),
            "T": int(sched.steps),
            "shape": list(x.shape),
            **fields,
        }
        sections = list(sections) + [payload.tobytes()]
        reply, raw = self._connection().request(header, sections)
        if tuple(reply.get("shape", ())) != x.shape:
            raise BackendError(
                f"service echoed shape {reply.get('shape')} for {x.shape}"
            )
        eps = np.frombuffer(raw, dtype="<f4").reshape(x.shape)
        return eps.astype(np.float64)

    def close(self) -> None:
        if self._transport is not None:
            self._transport.close()
            self._transport = None
