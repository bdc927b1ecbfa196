"""Dense keypoint-box attention modulation.

Attention scores between image-position queries and text-token keys get an
additive pre-softmax bias: same-segment pairs are pulled toward their row
maximum and cross-segment pairs toward their row minimum, scaled by a
decaying strength and damped for large segments.  The construction never
pushes a score past the row extremes, so the pre-trained score range is
preserved.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimMismatch, OverlapError


@dataclass(frozen=True)
class SegmentSpec:
    """Query-position and key-token membership of one segment.

    Key tokens must not be claimed by more than one segment; query masks
    may overlap (a position can attend to several descriptions).
    """

    segment_id: str
    query_mask: np.ndarray  # bool (nq,)
    key_mask: np.ndarray    # bool (nk,)


@dataclass(frozen=True)
class ModulationParams:
    strength: float  # base modulation strength, >= 0
    t: int
    total_steps: int

    def __post_init__(self) -> None:
        if self.strength < 0:
            raise ValueError("strength must be non-negative")
        if not 0 <= self.t <= self.total_steps:
            raise ValueError(f"t={self.t} outside [0, {self.total_steps}]")


def base_attention(queries: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Row-stochastic softmax(Q K^T / sqrt(d)) with max-subtraction."""
    if queries.ndim != 2 or keys.ndim != 2 or queries.shape[1] != keys.shape[1]:
        raise DimMismatch(
            f"incompatible shapes {queries.shape} x {keys.shape}"
        )
    scores = queries @ keys.T / np.sqrt(queries.shape[1])
    return _softmax_rows(scores)


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    weights = np.exp(shifted)
    return weights / weights.sum(axis=1, keepdims=True)


def _check_segments(
    segments: Sequence[SegmentSpec], nq: int, nk: int
) -> None:
    claimed = np.zeros(nk, dtype=bool)
    for seg in segments:
        if seg.query_mask.shape != (nq,) or seg.key_mask.shape != (nk,):
            raise DimMismatch(
                f"segment {seg.segment_id}: masks must be ({nq},) and ({nk},)"
            )
        overlap = claimed & seg.key_mask
        if overlap.any():
            raise OverlapError(
                f"segment {seg.segment_id} re-claims key tokens "
                f"{np.flatnonzero(overlap).tolist()}"
            )
        claimed |= seg.key_mask
    return None


def build_condition_map(
    segments: Sequence[SegmentSpec], nq: int, nk: int
) -> np.ndarray:
    """Boolean (nq, nk) map: 1 where query and key share a segment."""
    _check_segments(segments, nq, nk)
    positive = np.zeros((nq, nk), dtype=bool)
    for seg in segments:
        positive |= np.outer(seg.query_mask, seg.key_mask)
    return positive


def build_size_map(
    segments: Sequence[SegmentSpec], canvas_area: float, nq: int, nk: int
) -> np.ndarray:
    """Relative segment area on positive pairs, 0 elsewhere.

    The owning segment of a pair is the (unique) one claiming the key
    token; its area is the query-mask population.
    """
    if canvas_area <= 0:
        raise ValueError("canvas_area must be positive")
    _check_segments(segments, nq, nk)
    size = np.zeros((nq, nk), dtype=np.float64)
    for seg in segments:
        area = float(seg.query_mask.sum())
        if area > canvas_area:
            raise ValueError(
                f"segment {seg.segment_id} area {area} exceeds canvas {canvas_area}"
            )
        pairs = np.outer(seg.query_mask, seg.key_mask)
        size[pairs] = area / canvas_area
    return size


def build_range_maps(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row headroom to the maximum and footroom to the minimum.

    positive_gap[i, j] = max_j'(raw[i, j']) - raw[i, j]
    negative_gap[i, j] = raw[i, j] - min_j'(raw[i, j'])
    Both are non-negative by construction.
    """
    if not np.all(np.isfinite(raw)):
        raise ValueError("raw scores must be finite")
    row_max = raw.max(axis=1, keepdims=True)
    row_min = raw.min(axis=1, keepdims=True)
    return row_max - raw, raw - row_min


def lambda_schedule(params: ModulationParams) -> float:
    """Linear decay of the modulation strength toward t = 0."""
    if params.total_steps == 0:
        return 0.0
    return params.strength * params.t / params.total_steps


def modulate(
    queries: np.ndarray,
    keys: np.ndarray,
    segments: Sequence[SegmentSpec],
    params: ModulationParams,
    canvas_area: float,
) -> np.ndarray:
    """Segment-aware attention: softmax((Q K^T + bias) / sqrt(d)).

    bias = c * positive_gap on same-segment pairs and -c * negative_gap on
    cross-segment pairs, with c = min(lambda_t * (1 - relative_size), 1)
    so modulated scores never leave the original per-row range and are
    nondecreasing in the strength on positive pairs.  Key tokens owned by
    no segment stay unmodulated, so with strength 0 or no segments this
    reduces to base_attention exactly.
    """
    if queries.ndim != 2 or keys.ndim != 2 or queries.shape[1] != keys.shape[1]:
        raise DimMismatch(
            f"incompatible shapes {queries.shape} x {keys.shape}"
        )
    nq, nk = queries.shape[0], keys.shape[0]
    raw = queries @ keys.T
    positive = build_condition_map(segments, nq, nk)
    key_owned = np.zeros(nk, dtype=bool)
    for seg in segments:
        key_owned |= seg.key_mask
    negative = key_owned[None, :] & ~positive
    size = build_size_map(segments, canvas_area, nq, nk)
    pos_gap, neg_gap = build_range_maps(raw)
    coeff = np.minimum(lambda_schedule(params) * (1.0 - size), 1.0)
    bias = np.where(positive, coeff * pos_gap, 0.0)
    bias -= np.where(negative, coeff * neg_gap, 0.0)
    return _softmax_rows((raw + bias) / np.sqrt(queries.shape[1]))
