"""Reference external denoiser service speaking the wire protocol."""

from .adapter import ModelAdapter
from .mock import MockDenoiser, canonical_alpha_bar
from .protocol import DenoiseRequest, ServiceError
from .service import serve_stdio, serve_stream, serve_tcp

__version__ = "0.1.0"
