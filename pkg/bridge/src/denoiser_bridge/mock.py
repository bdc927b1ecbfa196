"""Deterministic mock denoiser: epsilon = tanh(x) * sqrt(1 - alpha_bar_t).

alpha_bar is recomputed from (t, T) alone using the canonical schedule
convention shared with clients: a linear-beta grid of 1000 base steps
(beta from 1e-4 to 0.02), subset at index round(t * 1000 / T).  All
arithmetic runs in float32 on the float32 wire payload, so an in-process
reimplementation that quantizes its input the same way matches the service
bit-for-bit.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .protocol import DenoiseRequest, ServiceError

BASE_STEPS = 1000


@lru_cache(maxsize=None)
def _base_alpha_bar() -> tuple[float, ...]:
    betas = np.linspace(1e-4, 0.02, BASE_STEPS)
    return tuple(np.concatenate([[1.0], np.cumprod(1.0 - betas)]))


def canonical_alpha_bar(t: int, total_steps: int) -> float:
    if not 1 <= total_steps <= BASE_STEPS:
        raise ServiceError(f"T={total_steps} outside [1, {BASE_STEPS}]")
    if not 0 <= t <= total_steps:
        raise ServiceError(f"t={t} outside [0, {total_steps}]")
    return _base_alpha_bar()[round(t * BASE_STEPS / total_steps)]


class MockDenoiser:
    """Pure function of (x_t, t); ignores every condition."""

    def capabilities(self) -> dict:
        return {
            "accepts_conditions": False,
            "deterministic": True,
            "max_concurrency": 1,
            "kinds": [],
        }

    def denoise(self, request: DenoiseRequest) -> np.ndarray:
        alpha_bar = np.float32(
            canonical_alpha_bar(request.t, request.total_steps)
        )
        scale = np.sqrt(np.float32(1.0) - alpha_bar)
        return np.tanh(request.x) * scale
