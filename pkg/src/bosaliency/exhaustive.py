"""Sliding-window occlusion over every grid centre and window size."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .acquisition import CandidateGrid
from .bo import check_sizes
from .image import DEFAULT_FILL, Image, SaliencyMap, blank_window, normalize_map, upsample_bilinear, window_slices
from .models import Model, delta

ACCUMULATIONS = ("center-assign", "window-spread")


@dataclass(frozen=True)
class SweepConfig:
    sizes: tuple[int, ...] = (50, 64, 78, 92, 107, 121, 135, 150)
    stride: int = 1
    fill: float = DEFAULT_FILL
    accumulation: str = "center-assign"

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if not self.sizes:
            raise ValueError("sizes must be non-empty")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.accumulation not in ACCUMULATIONS:
            raise ValueError(f"accumulation must be one of {ACCUMULATIONS}, got {self.accumulation!r}")

    def to_dict(self) -> dict:
        return {"sizes": list(self.sizes), "stride": self.stride, "fill": self.fill,
                "accumulation": self.accumulation}


def query_count(width: int, height: int, n_sizes: int, stride: int) -> int:
    """Model evaluations of a sweep, including the single base-image score."""
    return math.ceil(width / stride) * math.ceil(height / stride) * n_sizes + 1


def stride_for_budget(width: int, height: int, n_sizes: int, budget: int) -> int:
    """Stride whose occlusion-query count lies closest to ``budget`` (smaller stride on ties)."""
    best, best_gap = 1, math.inf
    for stride in range(1, max(width, height) + 1):
        gap = abs(query_count(width, height, n_sizes, stride) - 1 - budget)
        if gap < best_gap:
            best, best_gap = stride, gap
    return best


def run_exhaustive(
    model: Model,
    image: Image,
    config: SweepConfig = SweepConfig(),
    rng: np.random.Generator | None = None,
) -> tuple[SaliencyMap, int]:
    """Occlude at every (u, v, s) of the strided grid and build a map from the score drops.

    ``center-assign`` stores the mean drop over sizes at each centre (then
    upsamples bilinearly when ``stride > 1``). ``window-spread`` adds
    ``y / s**2`` to every pixel a window covers and divides by how many
    windows covered it. If ``rng`` is given the centres are visited in a
    random order, which must not change the result.
    """
    check_sizes(config.sizes, image.width, image.height)
    grid = CandidateGrid(image.width, image.height, config.sizes, config.stride)
    start = model.n_queries
    ys = np.empty(len(grid))
    order = np.arange(len(grid)) if rng is None else rng.permutation(len(grid))
    for idx in order:
        u, v, s = grid.point(idx)
        ys[idx] = delta(model, image, blank_window(image, u, v, s, config.fill)).y
    n_queries = model.n_queries - start
    ys = ys.reshape(grid.n_v, grid.n_u, len(grid.sizes))

    if config.accumulation == "center-assign":
        coarse = ys.mean(axis=2)
        if config.stride == 1:
            full = coarse
        else:
            full = upsample_bilinear(coarse, grid.vs, grid.us, image.height, image.width)
    else:
        acc = np.zeros((image.height, image.width))
        cover = np.zeros((image.height, image.width))
        for iv, v in enumerate(grid.vs):
            for iu, u in enumerate(grid.us):
                for k, s in enumerate(grid.sizes):
                    rows, cols = window_slices(int(u), int(v), s, image.width, image.height)
                    acc[rows, cols] += ys[iv, iu, k] / (s * s)
                    cover[rows, cols] += 1
        full = np.divide(acc, cover, out=np.zeros_like(acc), where=cover > 0)
    return normalize_map(SaliencyMap(full)), n_queries
