import argparse
import sys

from .adapter import ModelAdapter
from .mock import MockDenoiser
from .service import serve_stdio, serve_tcp


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="denoiser-bridge",
        description="Reference denoiser service for the wire protocol",
    )
    parser.add_argument("--mode", choices=("stdio", "tcp"), default="stdio")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=0,
                        help="0 binds an ephemeral port (announced on stdout)")
    parser.add_argument("--backend", choices=("mock", "adapter"),
                        default="mock")
    args = parser.parse_args(argv)

    denoiser = MockDenoiser() if args.backend == "mock" else ModelAdapter()
    if args.mode == "stdio":
        serve_stdio(denoiser)
        return 0

    def announce(port: int) -> None:
        print(f"LISTENING {port}", flush=True)

    try:
        serve_tcp(denoiser, args.host, args.port, announce)
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
