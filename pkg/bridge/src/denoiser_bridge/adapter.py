"""Adapter that maps wire requests onto a locally loaded diffusion model.

The model handle is any callable `(x, t, total_steps, condition) -> eps`
over float32 arrays, where condition carries the decoded caption, keypoint
map and segment masks.  Requests are refused with ModelUnavailable when no
model is loaded and with ConditionUnsupported when they carry condition
kinds the model did not declare.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .protocol import DenoiseRequest, ServiceError

ModelFn = Callable[[np.ndarray, int, int, dict], np.ndarray]


class ModelAdapter:
    def __init__(self, model: ModelFn | None = None,
                 condition_kinds: tuple[str, ...] = ()):
        self._model = model
        self._kinds = tuple(condition_kinds)

    def capabilities(self) -> dict:
        return {
            "accepts_conditions": bool(self._kinds) and self._model is not None,
            "deterministic": True,
            "max_concurrency": 1,
            "kinds": list(self._kinds) if self._model is not None else [],
        }

    def denoise(self, request: DenoiseRequest) -> np.ndarray:
        if self._model is None:
            raise ServiceError("ModelUnavailable: no model is loaded")
        if request.keypoint_map is not None and request.keypoint_map.any() \
                and "keypoint_map" not in self._kinds:
            raise ServiceError(
                "ConditionUnsupported: model takes no keypoint map"
            )
        if request.segments and "segments" not in self._kinds:
            raise ServiceError(
                "ConditionUnsupported: model takes no segment masks"
            )
        condition = {
            "global_caption": request.global_caption,
            "keypoint_map": request.keypoint_map,
            "segments": request.segments,
        }
        eps = self._model(request.x, request.t, request.total_steps, condition)
        eps = np.asarray(eps, dtype=np.float32)
        if eps.shape != request.x.shape:
            raise ServiceError(
                f"model returned shape {eps.shape} for input {request.x.shape}"
            )
        return eps
