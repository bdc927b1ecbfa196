"""Pyramidal refinement: upscale, perturb pixels, re-noise, re-denoise.

Each phase enlarges the previous result, swaps a small fraction of pixels
with near-neighbours from the low-resolution source to re-inject high
frequencies, pushes the tensor forward to an intermediate noise level and
runs the joint windowed reverse process from there.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimMismatch
from .engine import (
    DenoiserBackend,
    NoiseSchedule,
    RngStream,
    forward_noise,
    step_from_normalized,
    vcjd,
)
from .geometry import ConditionSet, WindowPlan, ensure_latent

# rng derivation roles inside a pyramid run
_ROLE_INIT = 0
_ROLE_RUN = 1
_ROLE_PERTURB = 2
_ROLE_FORWARD = 3


@dataclass(frozen=True)
class PyramidConfig:
    """Phase count, per-phase scale factor, perturbation and re-noise depth.

    refine_times holds one normalized timestep per refinement phase; the
    initial full generation runs from initial_time (1.0 = pure noise).
    """

    phases: int = 2
    alpha: float = 2.0
    gamma: float = 0.05
    distance: int = 1
    refine_times: tuple[float, ...] = (0.5, 0.5)
    initial_time: float = 1.0
    method: str = "bilinear"  # "bilinear" | "lanczos"

    def __post_init__(self) -> None:
        if self.phases < 0:
            raise ValueError("phases must be non-negative")
        if self.phases and self.alpha <= 1:
            raise ValueError("alpha must exceed 1")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must be in [0, 1]")
        if self.distance < 0:
            raise ValueError("distance must be non-negative")
        if len(self.refine_times) != self.phases:
            raise ValueError(
                f"need {self.phases} refine times, got {len(self.refine_times)}"
            )
        if any(not 0 < t <= 1 for t in self.refine_times):
            raise ValueError("refine times must be in (0, 1]")
        if not 0 < self.initial_time <= 1:
            raise ValueError("initial_time must be in (0, 1]")
        if self.method not in ("bilinear", "lanczos"):
            raise ValueError(f"unknown interpolation method {self.method!r}")


def scaled_length(length: int, alpha: float) -> int:
    """Output extent rule: floor(length * alpha + 0.5)."""
    return int(np.floor(length * alpha + 0.5))


def _resize_weights(n_in: int, n_out: int, alpha: float, method: str) -> np.ndarray:
    """Separable resampling weights, rows summing to 1, edge-clamped.

    Output sample o reads source coordinate (o + 0.5) / alpha - 0.5.
    """
    weights = np.zeros((n_out, n_in))
    coords = (np.arange(n_out) + 0.5) / alpha - 0.5
    if method == "bilinear":
        taps = 1
        kernel = lambda d: np.maximum(0.0, 1.0 - np.abs(d))
    else:  # lanczos, a = 3
        taps = 3
        def kernel(d):
            d = np.asarray(d, dtype=np.float64)
            out = np.sinc(d) * np.sinc(d / 3.0)
            return np.where(np.abs(d) < 3.0, out, 0.0)
    for o, src in enumerate(coords):
        lo = int(np.floor(src)) - taps + 1
        idx = np.arange(lo, lo + 2 * taps)
        w = kernel(src - idx)
        total = w.sum()
        if total != 0:
            w = w / total
        np.add.at(weights[o], np.clip(idx, 0, n_in - 1), w)
    return weights


def interpolate(z: np.ndarray, alpha: float, method: str = "bilinear") -> np.ndarray:
    """Separable upscale to floor(dims * alpha + 0.5), channels independent."""
    ensure_latent(z)
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    if method not in ("bilinear", "lanczos"):
        raise ValueError(f"unknown interpolation method {method!r}")
    h_in, w_in, _ = z.shape
    h_out = scaled_length(h_in, alpha)
    w_out = scaled_length(w_in, alpha)
    row_w = _resize_weights(h_in, h_out, alpha, method)
    col_w = _resize_weights(w_in, w_out, alpha, method)
    tall = np.tensordot(row_w, z, axes=(1, 0))          # (h_out, w_in, D)
    wide = np.tensordot(col_w, tall, axes=(1, 1))        # (w_out, h_out, D)
    return np.ascontiguousarray(wide.transpose(1, 0, 2))


def pixel_perturb(
    z_low: np.ndarray,
    z_interp: np.ndarray,
    alpha: float,
    gamma: float,
    distance: int,
    rng: RngStream,
) -> np.ndarray:
    """Swap each interpolated pixel, with probability gamma, for a source
    pixel at most `distance` away from its pre-image.

    The source index is floor(out / alpha + 0.5) plus a uniform offset in
    [-distance, distance] per axis, clamped to the source bounds.  Pixels
    left alone are bit-identical to the interpolation output.
    """
    ensure_latent(z_low)
    ensure_latent(z_interp)
    if not 0 <= gamma <= 1:
        raise ValueError("gamma must be in [0, 1]")
    if distance < 0:
        raise ValueError("distance must be non-negative")
    h_low, w_low, channels = z_low.shape
    h_out, w_out, ch_out = z_interp.shape
    expected = (scaled_length(h_low, alpha), scaled_length(w_low, alpha))
    if (h_out, w_out) != expected or ch_out != channels:
        raise DimMismatch(
            f"interp {z_interp.shape} does not match source {z_low.shape} "
            f"scaled by {alpha}"
        )
    gen = rng.generator()
    swap = gen.random((h_out, w_out)) < gamma
    off_r = gen.integers(-distance, distance + 1, size=(h_out, w_out))
    off_c = gen.integers(-distance, distance + 1, size=(h_out, w_out))
    rows = np.floor(np.arange(h_out)[:, None] / alpha + 0.5).astype(np.int64)
    cols = np.floor(np.arange(w_out)[None, :] / alpha + 0.5).astype(np.int64)
    src_r = np.clip(rows + off_r, 0, h_low - 1)
    src_c = np.clip(cols + off_c, 0, w_low - 1)
    return np.where(swap[..., None], z_low[src_r, src_c], z_interp)


def pppi(
    condition_factory: Callable[[int, int], ConditionSet | None],
    config: PyramidConfig,
    base_canvas: tuple[int, int],
    plan_factory: Callable[[int, int], WindowPlan],
    backend: DenoiserBackend,
    sched: NoiseSchedule,
    rng: RngStream,
    channels: int = 1,
    eta: float = 0.0,
) -> np.ndarray:
    """Full pyramid: generate at the base resolution, then repeatedly
    upscale, perturb, forward-noise to the phase timestep and re-run the
    joint reverse process.  Conditions and window plans are rebuilt per
    phase resolution via the factories.  Deterministic for a given rng."""
    height, width = base_canvas
    t0 = max(1, step_from_normalized(config.initial_time, sched.steps))
    z_noise = rng.child(_ROLE_INIT, 0).generator().standard_normal(
        (height, width, channels)
    )
    z = vcjd(
        z_noise,
        condition_factory(height, width),
        t0,
        plan_factory(height, width),
        backend,
        sched,
        rng.child(_ROLE_RUN, 0),
        eta,
    )
    for phase in range(config.phases):
        upscaled = interpolate(z, config.alpha, config.method)
        perturbed = pixel_perturb(
            z, upscaled, config.alpha, config.gamma, config.distance,
            rng.child(_ROLE_PERTURB, phase + 1),
        )
        t_ref = max(
            1, step_from_normalized(config.refine_times[phase], sched.steps)
        )
        noised = forward_noise(
            perturbed, t_ref, sched, rng.child(_ROLE_FORWARD, phase + 1)
        )
        height, width = noised.shape[:2]
        z = vcjd(
            noised,
            condition_factory(height, width),
            t_ref,
            plan_factory(height, width),
            backend,
            sched,
            rng.child(_ROLE_RUN, phase + 1),
            eta,
        )
    return z
