"""Noise schedule, forward process, single-view denoise step and the joint
multi-window reverse loop.

Backends predict the noise component of a latent; the engine owns every
latent between steps.  All randomness flows through RngStream so a run is a
pure function of its inputs and master seed.  The analytic Gaussian backend
gives a closed-form correct denoiser for a Gaussian data prior and serves
as the verification oracle for the whole sampling stack.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .errors import BackendError, CoverageError, StepOutOfRange
from .geometry import ConditionSet, ViewCondition, Window, WindowPlan, crop, crop_condition, ensure_latent, stitch

BASE_STEPS = 1000
_BETA_START = 1e-4
_BETA_END = 0.02

_base_alpha_bar: np.ndarray | None = None


def base_alpha_bar() -> np.ndarray:
    """Cumulative alpha products of the canonical linear-beta schedule,
    indexed 0..BASE_STEPS with entry 0 equal to 1."""
    global _base_alpha_bar
    if _base_alpha_bar is None:
        betas = np.linspace(_BETA_START, _BETA_END, BASE_STEPS)
        _base_alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return _base_alpha_bar


@dataclass(frozen=True)
class NoiseSchedule:
    """Strictly decreasing cumulative alphas, entry 0 pinned to 1."""

    alpha_bar: np.ndarray

    def __post_init__(self) -> None:
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        object.__setattr__(self, "alpha_bar", ab)
        if ab.ndim != 1 or len(ab) < 2:
            raise ValueError("alpha_bar needs at least two entries")
        if ab[0] != 1.0:
            raise ValueError("alpha_bar[0] must be 1")
        if ab[-1] <= 0:
            raise ValueError("alpha_bar must stay positive")
        if not np.all(np.diff(ab) < 0):
            raise ValueError("alpha_bar must be strictly decreasing")

    @property
    def steps(self) -> int:
        return len(self.alpha_bar) - 1

    @classmethod
    def linear(cls, steps: int) -> "NoiseSchedule":
        """Subset of the canonical 1000-step linear-beta grid.

        Step t of a T-step schedule reads base index round(t * 1000 / T),
        so any process that knows (t, T) can reproduce alpha_bar[t].
        """
        if not 1 <= steps <= BASE_STEPS:
            raise ValueError(f"steps must be in [1, {BASE_STEPS}]")
        idx = np.rint(np.arange(steps + 1) * (BASE_STEPS / steps)).astype(int)
        return cls(base_alpha_bar()[idx])

    def check_step(self, t: int, minimum: int = 0) -> None:
        if not minimum <= t <= self.steps:
            raise StepOutOfRange(
                f"step {t} outside [{minimum}, {self.steps}]"
            )


def step_from_normalized(fraction: float, steps: int) -> int:
    """Map a normalized timestep in [0, 1] to a schedule index."""
    if not 0 <= fraction <= 1:
        raise StepOutOfRange(f"normalized timestep {fraction} outside [0, 1]")
    return int(round(fraction * steps))


@dataclass(frozen=True)
class RngStream:
    """Reproducible, independent random streams keyed by a derivation path.

    Distinct paths (phase, step, window, ...) give statistically independent
    generators; the same path always gives the same draws.  Derive one child
    per consumer and never reuse a stream for two draws.
    """

    master_seed: int
    path: tuple[int, ...] = ()

    def child(self, *steps: int) -> "RngStream":
        return RngStream(self.master_seed, self.path + steps)

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=self.path)
        return np.random.default_rng(seq)


@dataclass(frozen=True)
class BackendCapabilities:
    accepts_conditions: bool
    deterministic: bool
    max_concurrency: int = 1
    kinds: tuple[str, ...] = ()


@runtime_checkable
class DenoiserBackend(Protocol):
    """Contract for noise predictors: identical inputs give identical output."""

    def capabilities(self) -> BackendCapabilities: ...

    def predict_epsilon(
        self,
        x: np.ndarray,
        t: int,
        sched: NoiseSchedule,
        condition: ViewCondition | None = None,
    ) -> np.ndarray: ...


def analytic_gaussian_epsilon(
    x: np.ndarray,
    t: int,
    prior: tuple[float, float],
    sched: NoiseSchedule,
) -> np.ndarray:
    """Exact posterior noise prediction when the clean data is N(mean, std^2).

    posterior_mean = (sqrt(ab) * std^2 * x + (1 - ab) * mean)
                     / (ab * std^2 + 1 - ab)
    epsilon_hat    = (x - sqrt(ab) * posterior_mean) / sqrt(1 - ab)
    """
    mean, std = prior
    if std <= 0:
        raise ValueError("prior std must be positive")
    sched.check_step(t, minimum=1)
    ab = sched.alpha_bar[t]
    var = std * std
    posterior = (np.sqrt(ab) * var * x + (1.0 - ab) * mean) / (ab * var + 1.0 - ab)
    return (x - np.sqrt(ab) * posterior) / np.sqrt(1.0 - ab)


@dataclass(frozen=True)
class AnalyticGaussianBackend:
    """Closed-form denoiser for a Gaussian data prior; ignores conditions."""

    mean: float = 0.0
    std: float = 1.0

    def capabilities(self) -> BackendCapabilities:
        return BackendCapabilities(
            accepts_conditions=False, deterministic=True, max_concurrency=8
        )

    def predict_epsilon(self, x, t, sched, condition=None):
        return analytic_gaussian_epsilon(x, t, (self.mean, self.std), sched)


@dataclass(frozen=True)
class ZeroBackend:
    """Predicts zero noise everywhere."""

    def capabilities(self) -> BackendCapabilities:
        return BackendCapabilities(
            accepts_conditions=False, deterministic=True, max_concurrency=8
        )

    def predict_epsilon(self, x, t, sched, condition=None):
        return np.zeros_like(x)


@dataclass(frozen=True)
class MockBackend:
    """Fixed nonlinear rule: epsilon = tanh(x) * sqrt(1 - alpha_bar[t]).

    Computed in float32 so an external service receiving the float32 wire
    payload reproduces it bit-for-bit.
    """

    def capabilities(self) -> BackendCapabilities:
        return BackendCapabilities(
            accepts_conditions=False, deterministic=True, max_concurrency=8
        )

    def predict_epsilon(self, x, t, sched, condition=None):
        sched.check_step(t, minimum=1)
        ab = np.float32(sched.alpha_bar[t])
        scale = np.sqrt(np.float32(1.0) - ab)
        return (np.tanh(x.astype(np.float32)) * scale).astype(np.float64)


def forward_noise(
    z0: np.ndarray, t: int, sched: NoiseSchedule, rng: RngStream
) -> np.ndarray:
    """z_t = sqrt(ab_t) * z0 + sqrt(1 - ab_t) * noise."""
    ensure_latent(z0)
    sched.check_step(t)
    ab = sched.alpha_bar[t]
    noise = rng.generator().standard_normal(z0.shape)
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * noise


def _predict(backend, x, t, sched, condition, window_index=None):
    where = "" if window_index is None else f" (window {window_index})"
    try:
        eps = backend.predict_epsilon(x, t, sched, condition)
    except BackendError as exc:
        raise BackendError(f"{exc}{where}") from exc
    if not isinstance(eps, np.ndarray) or eps.shape != x.shape:
        raise BackendError(
            f"backend returned shape {getattr(eps, 'shape', None)} "
            f"for input {x.shape}{where}"
        )
    return eps


def denoise_step(
    x: np.ndarray,
    t: int,
    condition: ViewCondition | None,
    backend: DenoiserBackend,
    sched: NoiseSchedule,
    rng: RngStream | None = None,
    eta: float = 0.0,
) -> np.ndarray:
    """One reverse step x_t -> x_{t-1}.

    Deterministic (eta = 0) update: the backend predicts the noise, the
    clean estimate is reconstructed, and the pair is recombined at the
    previous noise level.  eta > 0 blends in fresh noise drawn from rng.
    """
    ensure_latent(x)
    sched.check_step(t, minimum=1)
    ab_t = sched.alpha_bar[t]
    ab_prev = sched.alpha_bar[t - 1]
    eps = _predict(backend, x, t, sched, condition)
    x0 = (x - np.sqrt(1.0 - ab_t) * eps) / np.sqrt(ab_t)
    if eta == 0.0:
        return np.sqrt(ab_prev) * x0 + np.sqrt(1.0 - ab_prev) * eps
    if rng is None:
        raise ValueError("eta > 0 requires an RngStream")
    sigma = (
        eta
        * np.sqrt((1.0 - ab_prev) / (1.0 - ab_t))
        * np.sqrt(1.0 - ab_t / ab_prev)
    )
    direction = np.sqrt(max(1.0 - ab_prev - sigma**2, 0.0)) * eps
    noise = rng.generator().standard_normal(x.shape)
    return np.sqrt(ab_prev) * x0 + direction + sigma * noise


def reverse_run(
    z_start: np.ndarray,
    t_start: int,
    condition: ViewCondition | None,
    backend: DenoiserBackend,
    sched: NoiseSchedule,
    rng: RngStream,
    eta: float = 0.0,
) -> np.ndarray:
    """Plain sequential sampler: denoise the full canvas t_start..1."""
    sched.check_step(t_start, minimum=1)
    x = z_start
    for t in range(t_start, 0, -1):
        x = denoise_step(x, t, condition, backend, sched, rng.child(t, 0), eta)
    return x


def vcjd_step(
    views: Sequence[tuple[np.ndarray, Window]],
    t: int,
    conditions: Sequence[ViewCondition | None],
    backend: DenoiserBackend,
    sched: NoiseSchedule,
    canvas: tuple[int, int],
    rng: RngStream,
    eta: float = 0.0,
    average: str = "denoised",
) -> list[tuple[np.ndarray, Window]]:
    """One joint step: denoise every view, average globally, re-crop.

    average="denoised" stitches the denoised views (the default);
    average="noisy" stitches the incoming noisy views first and denoises
    the re-cropped result instead.
    """
    if len(views) != len(conditions):
        raise ValueError("views and conditions must be index-aligned")
    if average not in ("denoised", "noisy"):
        raise ValueError(f"unknown averaging mode {average!r}")

    if average == "noisy":
        z = stitch(views, canvas)
        views = [(crop(z, w), w) for _, w in views]

    def _one(i: int) -> np.ndarray:
        x, window = views[i]
        try:
            return denoise_step(
                x, t, conditions[i], backend, sched, rng.child(t, i), eta
            )
        except BackendError as exc:
            raise BackendError(f"{exc} (window {window.index})") from exc

    workers = min(backend.capabilities().max_concurrency, len(views))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            denoised = list(pool.map(_one, range(len(views))))
    else:
        denoised = [_one(i) for i in range(len(views))]

    if average == "noisy":
        return [(denoised[i], w) for i, (_, w) in enumerate(views)]
    z = stitch([(denoised[i], w) for i, (_, w) in enumerate(views)], canvas)
    return [(crop(z, w), w) for _, w in views]


def vcjd(
    z_start: np.ndarray,
    conditions: ConditionSet | None,
    t_start: int,
    plan: WindowPlan,
    backend: DenoiserBackend,
    sched: NoiseSchedule,
    rng: RngStream,
    eta: float = 0.0,
    average: str = "denoised",
) -> np.ndarray:
    """Joint windowed reverse process from step t_start down to 0.

    Crops the start latent and the global conditions per window, runs the
    joint step loop, and stitches the final canvas.  Deterministic for a
    given rng stream; with a single full-canvas window it reproduces
    reverse_run bit-for-bit.
    """
    ensure_latent(z_start)
    sched.check_step(t_start, minimum=1)
    canvas = (plan.canvas_height, plan.canvas_width)
    if z_start.shape[:2] != canvas:
        raise CoverageError(
            f"latent {z_start.shape[:2]} does not match plan canvas {canvas}"
        )
    plan.validate()
    views = [(crop(z_start, w), w) for w in plan.windows]
    if conditions is None:
        view_conditions: list[ViewCondition | None] = [None] * len(plan.windows)
    else:
        conditions.validate()
        view_conditions = [crop_condition(conditions, w) for w in plan.windows]
    for t in range(t_start, 0, -1):
        views = vcjd_step(
            views, t, view_conditions, backend, sched, canvas, rng, eta, average
        )
    return stitch(views, canvas)
