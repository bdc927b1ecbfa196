"""Window planning over the latent canvas and the crop/embed/stitch operators.

Latents are numpy float64 arrays of shape (height, width, channels).  A
window is a fixed-size sub-rectangle of the canvas; a plan is a set of
windows whose union covers the canvas.  Stitching averages the windowed
views back into the canvas and is exact on consensus: if every view agrees
on every overlap, the stitched canvas reproduces those values bit-for-bit.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CoverageError, DimMismatch, WindowTooLarge
from .layout import SKELETON_EDGES, SceneLayout


def ensure_latent(z: np.ndarray) -> np.ndarray:
    if z.ndim != 3 or min(z.shape) < 1:
        raise DimMismatch(f"latent must be (H, W, D) with positive dims, got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("latent contains non-finite values")
    return z


@dataclass(frozen=True)
class Window:
    """One view's placement on the canvas, in latent pixels."""

    index: int
    row: int
    col: int
    height: int
    width: int

    @property
    def slices(self) -> tuple[slice, slice]:
        return (slice(self.row, self.row + self.height),
                slice(self.col, self.col + self.width))

    def within(self, canvas_height: int, canvas_width: int) -> bool:
        return (0 <= self.row and 0 <= self.col
                and self.row + self.height <= canvas_height
                and self.col + self.width <= canvas_width)


@dataclass(frozen=True)
class WindowPlan:
    canvas_height: int
    canvas_width: int
    windows: tuple[Window, ...]

    def coverage_count(self) -> np.ndarray:
        count = np.zeros((self.canvas_height, self.canvas_width), dtype=np.int64)
        for w in self.windows:
            count[w.slices] += 1
        return count

    def validate(self) -> None:
        for w in self.windows:
            if not w.within(self.canvas_height, self.canvas_width):
                raise WindowTooLarge(f"window {w.index} exceeds the canvas")
        if not np.all(self.coverage_count() >= 1):
            raise CoverageError("window union does not cover the canvas")


def _axis_origins(extent: int, window: int, stride: int) -> list[int]:
    origins = []
    pos = 0
    while True:
        if pos + window >= extent:
            origins.append(extent - window)  # clamp the last one to the edge
            break
        origins.append(pos)
        pos += stride
    return origins


def plan_windows(
    canvas: tuple[int, int],
    window: tuple[int, int],
    stride: int | tuple[int, int],
) -> WindowPlan:
    """Regular window grid over (height, width), last row/column clamped
    to the canvas edge so the union always covers the canvas."""
    canvas_h, canvas_w = canvas
    win_h, win_w = window
    stride_h, stride_w = (stride, stride) if isinstance(stride, int) else stride
    if win_h > canvas_h or win_w > canvas_w:
        raise WindowTooLarge(f"window {window} exceeds canvas {canvas}")
    if min(win_h, win_w) < 1 or min(stride_h, stride_w) < 1:
        raise ValueError("window and stride must be positive")
    windows = []
    for row in _axis_origins(canvas_h, win_h, stride_h):
        for col in _axis_origins(canvas_w, win_w, stride_w):
            windows.append(Window(len(windows), row, col, win_h, win_w))
    return WindowPlan(canvas_h, canvas_w, tuple(windows))


def crop(z: np.ndarray, window: Window) -> np.ndarray:
    ensure_latent(z)
    if not window.within(z.shape[0], z.shape[1]):
        raise DimMismatch(f"window {window} outside canvas {z.shape[:2]}")
    return z[window.slices].copy()


def embed(x: np.ndarray, window: Window, canvas: tuple[int, int]) -> np.ndarray:
    ensure_latent(x)
    if x.shape[:2] != (window.height, window.width):
        raise DimMismatch(f"view {x.shape[:2]} does not fit window {window}")
    if not window.within(*canvas):
        raise DimMismatch(f"window {window} outside canvas {canvas}")
    out = np.zeros((canvas[0], canvas[1], x.shape[2]), dtype=x.dtype)
    out[window.slices] = x
    return out


def stitch(
    views: Sequence[tuple[np.ndarray, Window]], canvas: tuple[int, int]
) -> np.ndarray:
    """Per-pixel mean of the covering views.

    Views are accumulated in canonical window order, and the mean is formed
    as first_value + mean(deviations), which returns consensus values
    exactly and is permutation-invariant.  Raises CoverageError if any
    canvas pixel is uncovered.
    """
    if not views:
        raise CoverageError("no views to stitch")
    canvas_h, canvas_w = canvas
    channels = views[0][0].shape[2]
    ordered = sorted(
        views, key=lambda v: (v[1].index, v[1].row, v[1].col, v[1].height, v[1].width)
    )
    base = np.zeros((canvas_h, canvas_w, channels))
    deviation = np.zeros_like(base)
    count = np.zeros((canvas_h, canvas_w), dtype=np.int64)
    filled = np.zeros((canvas_h, canvas_w), dtype=bool)
    for x, window in ordered:
        ensure_latent(x)
        if x.shape[:2] != (window.height, window.width):
            raise DimMismatch(f"view {x.shape[:2]} does not fit window {window}")
        if x.shape[2] != channels:
            raise DimMismatch("views disagree on channel count")
        if not window.within(canvas_h, canvas_w):
            raise DimMismatch(f"window {window} outside canvas {canvas}")
        rows, cols = window.slices
        fresh = ~filled[rows, cols]
        base[rows, cols][fresh] = x[fresh]
        filled[rows, cols] = True
        deviation[rows, cols] += x - base[rows, cols]
        count[rows, cols] += 1
    if not filled.all():
        raise CoverageError(f"{int((~filled).sum())} canvas pixels uncovered")
    return base + deviation / count[..., None]


# ---------------------------------------------------------------------------
# conditions


@dataclass(frozen=True)
class DensePair:
    """A per-instance caption with its binary spatial mask."""

    caption: str
    mask: np.ndarray  # uint8 (H, W), values in {0, 1}


@dataclass(frozen=True)
class ConditionSet:
    """Global conditioning: caption, keypoint map and dense caption pairs."""

    global_caption: str
    keypoint_map: np.ndarray  # float (H, W, C)
    dense_pairs: tuple[DensePair, ...] = ()

    def validate(self) -> None:
        if self.keypoint_map.ndim != 3:
            raise DimMismatch("keypoint map must be (H, W, C)")
        spatial = self.keypoint_map.shape[:2]
        for pair in self.dense_pairs:
            if pair.mask.shape != spatial:
                raise DimMismatch(
                    f"mask {pair.mask.shape} does not match canvas {spatial}"
                )
            if not np.isin(pair.mask, (0, 1)).all():
                raise ValueError("masks must be binary")


@dataclass(frozen=True)
class ViewCondition:
    """One window's share of the global conditioning."""

    full_text: str
    keypoint_map: np.ndarray
    dense_pairs: tuple[DensePair, ...] = ()


def crop_condition(conditions: ConditionSet, window: Window) -> ViewCondition:
    """Crop the keypoint map and every mask to the window; pairs whose
    cropped mask is all zero are dropped.  The full text is retained."""
    spatial = conditions.keypoint_map.shape[:2]
    if not window.within(*spatial):
        raise DimMismatch(f"window {window} outside condition canvas {spatial}")
    keypoint_map = conditions.keypoint_map[window.slices].copy()
    pairs = []
    for pair in conditions.dense_pairs:
        mask = pair.mask[window.slices]
        if mask.any():
            pairs.append(DensePair(pair.caption, mask.copy()))
    return ViewCondition(conditions.global_caption, keypoint_map, tuple(pairs))


# ---------------------------------------------------------------------------
# rasterization of a SceneLayout into a ConditionSet


@dataclass(frozen=True)
class RasterConfig:
    line_radius: int = 1          # Chebyshev dilation radius of skeleton lines
    keypoint_channels: int = 1    # 1 = binary map, 3 = replicated
    human_mask: str = "bbox"      # "bbox" | "skeleton"


def _draw_segment(grid: np.ndarray, p0: tuple[int, int], p1: tuple[int, int]) -> None:
    # Discrete line rule: step along the major axis from p0, minor coordinate
    # floor(exact + 0.5).  Endpoints included.
    (r0, c0), (r1, c1) = p0, p1
    dr, dc = r1 - r0, c1 - c0
    steps = max(abs(dr), abs(dc))
    if steps == 0:
        grid[r0, c0] = True
        return
    if abs(dc) >= abs(dr):
        cs = np.arange(c0, c1 + (1 if dc > 0 else -1), 1 if dc > 0 else -1)
        rs = np.floor(r0 + (cs - c0) * (dr / dc) + 0.5).astype(int)
    else:
        rs = np.arange(r0, r1 + (1 if dr > 0 else -1), 1 if dr > 0 else -1)
        cs = np.floor(c0 + (rs - r0) * (dc / dr) + 0.5).astype(int)
    grid[rs, cs] = True


def _dilate(grid: np.ndarray, radius: int) -> np.ndarray:
    if radius <= 0:
        return grid
    out = grid.copy()
    height, width = grid.shape
    for dr in range(-radius, radius + 1):
        for dc in range(-radius, radius + 1):
            if dr == 0 and dc == 0:
                continue
            src = grid[
                max(0, -dr):height - max(0, dr),
                max(0, -dc):width - max(0, dc),
            ]
            out[
                max(0, dr):height - max(0, -dr),
                max(0, dc):width - max(0, -dc),
            ] |= src
    return out


def _to_cell(value: float, scale: float, limit: int) -> int:
    return min(max(int(np.floor(value * scale)), 0), limit - 1)


def _skeleton_grid(
    layout: SceneLayout, dims: tuple[int, int], radius: int,
    only_instance: str | None = None,
) -> np.ndarray:
    height, width = dims
    scale_y = height / layout.canvas[1]
    scale_x = width / layout.canvas[0]
    grid = np.zeros((height, width), dtype=bool)
    for inst in layout.instances:
        if only_instance is not None and inst.id != only_instance:
            continue
        if inst.keypoints is None:
            continue
        cells = []
        for x, y, visible in inst.keypoints.joints:
            if visible:
                cells.append((_to_cell(y, scale_y, height),
                              _to_cell(x, scale_x, width)))
            else:
                cells.append(None)
        for cell in cells:
            if cell is not None:
                grid[cell] = True
        for a, b in SKELETON_EDGES:
            if cells[a] is not None and cells[b] is not None:
                _draw_segment(grid, cells[a], cells[b])
    return _dilate(grid, radius)


def _box_mask(layout: SceneLayout, bbox, dims: tuple[int, int]) -> np.ndarray:
    height, width = dims
    scale_y = height / layout.canvas[1]
    scale_x = width / layout.canvas[0]
    # Origin floors, extent ceils: a partially covered cell counts as covered.
    r0 = min(max(int(np.floor(bbox.y0 * scale_y)), 0), height - 1)
    c0 = min(max(int(np.floor(bbox.x0 * scale_x)), 0), width - 1)
    r1 = min(max(int(np.ceil(bbox.y1 * scale_y)), r0 + 1), height)
    c1 = min(max(int(np.ceil(bbox.x1 * scale_x)), c0 + 1), width)
    mask = np.zeros((height, width), dtype=np.uint8)
    mask[r0:r1, c0:c1] = 1
    return mask


def rasterize_conditions_at(
    layout: SceneLayout, dims: tuple[int, int],
    config: RasterConfig | None = None,
) -> ConditionSet:
    """Render the layout's skeletons and instance masks at (height, width)."""
    config = config or RasterConfig()
    if config.human_mask not in ("bbox", "skeleton"):
        raise ValueError(f"unknown human_mask mode {config.human_mask!r}")
    skeleton = _skeleton_grid(layout, dims, config.line_radius)
    keypoint_map = skeleton.astype(np.float64)[..., None]
    if config.keypoint_channels == 3:
        keypoint_map = np.repeat(keypoint_map, 3, axis=2)
    elif config.keypoint_channels != 1:
        raise ValueError("keypoint_channels must be 1 or 3")
    pairs = []
    for inst in layout.instances:
        if inst.kind == "human" and config.human_mask == "skeleton":
            mask = _skeleton_grid(
                layout, dims, config.line_radius, only_instance=inst.id
            ).astype(np.uint8)
            if not mask.any():  # no visible joints: fall back to the box
                mask = _box_mask(layout, inst.bbox, dims)
        else:
            mask = _box_mask(layout, inst.bbox, dims)
        pairs.append(DensePair(inst.caption, mask))
    return ConditionSet(layout.global_caption, keypoint_map, tuple(pairs))


def rasterize_conditions(
    layout: SceneLayout, latent_scale: float = 8.0,
    config: RasterConfig | None = None,
) -> ConditionSet:
    """Rasterize at the latent resolution ceil(canvas / latent_scale)."""
    if latent_scale <= 0:
        raise ValueError("latent_scale must be positive")
    width, height = layout.canvas
    dims = (int(np.ceil(height / latent_scale)), int(np.ceil(width / latent_scale)))
    return rasterize_conditions_at(layout, dims, config)
