"""Serve loop: one request at a time per connection, over standard streams
or TCP."""
from __future__ import annotations

import json
import socket
import threading

from .protocol import (
    ServiceError,
    read_denoise_body,
    write_capabilities,
    write_epsilon,
    write_error,
)


def serve_stream(reader, writer, denoiser) -> None:
    """Answer requests until the peer closes the connection.

    Malformed headers and denoiser failures produce an error status and the
    loop continues; a truncated binary body ends the connection since the
    stream can no longer be framed.
    """
    while True:
        line = reader.readline()
        if not line:
            return
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            write_error(writer, "malformed header")
            continue
        op = header.get("op")
        if op == "capabilities":
            write_capabilities(writer, denoiser.capabilities())
            continue
        if op != "denoise":
            write_error(writer, f"unknown op {op!r}")
            continue
        try:
            request = read_denoise_body(header, reader)
        except ValueError as exc:
            write_error(writer, str(exc))
            continue
        except EOFError:
            return
        try:
            epsilon = denoiser.denoise(request)
        except ServiceError as exc:
            write_error(writer, str(exc))
            continue
        if epsilon.shape != request.x.shape:
            write_error(writer, "denoiser changed the tensor shape")
            continue
        write_epsilon(writer, epsilon)


def serve_stdio(denoiser, stdin=None, stdout=None) -> None:
    import sys

    reader = stdin if stdin is not None else sys.stdin.buffer
    writer = stdout if stdout is not None else sys.stdout.buffer
    serve_stream(reader, writer, denoiser)


def serve_tcp(denoiser, host: str = "127.0.0.1", port: int = 0,
              announce=None, stop_event: threading.Event | None = None) -> None:
    """Accept connections forever; each one is served on its own thread.

    The bound port is passed to `announce` (and printed as "LISTENING n"
    by the CLI) so callers can bind port 0.
    """
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    server.bind((host, port))
    server.listen(8)
    if announce is not None:
        announce(server.getsockname()[1])
    server.settimeout(0.25)
    try:
        while stop_event is None or not stop_event.is_set():
            try:
                conn, _ = server.accept()
            except socket.timeout:
                continue
            thread = threading.Thread(
                target=_serve_connection, args=(conn, denoiser), daemon=True
            )
            thread.start()
    finally:
        server.close()


def _serve_connection(conn: socket.socket, denoiser) -> None:
    stream = conn.makefile("rwb")
    try:
        serve_stream(stream, stream, denoiser)
    finally:
        stream.close()
        conn.close()
