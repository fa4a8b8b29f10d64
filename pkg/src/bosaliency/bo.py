"""Bayesian-optimisation occlusion loop and saliency extraction."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import gp
from .acquisition import (
    STANDARD,
    AcquisitionConfig,
    CandidateGrid,
    CandidatesExhausted,
    sample_initial,
    select_next,
)
from .image import DEFAULT_FILL, Image, SaliencyMap, blank_window, normalize_map, upsample_bilinear
from .models import Model, QueryError, delta

PAPER_SIZES = (50, 64, 78, 92, 107, 121, 135, 150)
REDUCTIONS = ("mean", "max")
RESCALE_EPS = 1e-8


@dataclass(frozen=True)
class BoConfig:
    iterations: int = 200
    n_init: int = 5
    sizes: tuple[int, ...] = PAPER_SIZES
    fill: float = DEFAULT_FILL
    prediction_stride: int = 4
    reduction: str = "mean"
    seed: int = 0
    hp: gp.GpHyperparams = field(default_factory=gp.GpHyperparams)
    formula: str = STANDARD
    # Stop once y_best has not improved by more than 1e-4 over the last 50
    # iterations, after at least 100 iterations.
    stop_on_convergence: bool = False

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.n_init < 1:
            raise ValueError(f"n_init must be >= 1, got {self.n_init}")
        if not self.sizes:
            raise ValueError("sizes must be non-empty")
        if self.prediction_stride < 1:
            raise ValueError(f"prediction_stride must be >= 1, got {self.prediction_stride}")
        if self.reduction not in REDUCTIONS:
            raise ValueError(f"reduction must be one of {REDUCTIONS}, got {self.reduction!r}")
        AcquisitionConfig(self.formula)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sizes"] = list(self.sizes)
        return d


@dataclass
class IterationRecord:
    step: int
    phase: str
    u: int
    v: int
    s: int
    y: float
    y_best: float
    acquisition: float | None = None
    fit_seconds: float | None = None


@dataclass
class BoTrace:
    records: list[IterationRecord] = field(default_factory=list)
    query_count: int = 0
    scale: float = 1.0
    stopped: str = "budget"

    @property
    def y_best(self) -> list[float]:
        return [r.y_best for r in self.records]

    def points(self) -> np.ndarray:
        return np.array([[r.u, r.v, r.s] for r in self.records], dtype=np.float64).reshape(-1, 3)

    def responses(self) -> np.ndarray:
        return np.array([r.y for r in self.records], dtype=np.float64)

    def to_jsonl(self, include_timing: bool = False) -> str:
        """One JSON object per record.

        Fit timings are left out by default so that repeated runs produce
        byte-identical traces.
        """
        lines = []
        for r in self.records:
            d = asdict(r)
            if not include_timing:
                d.pop("fit_seconds")
            lines.append(json.dumps(d, sort_keys=True))
        return "".join(line + "\n" for line in lines)

    def write_jsonl(self, path, include_timing: bool = False) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_jsonl(include_timing))


class RunAborted(RuntimeError):
    """A model query failed mid-run; ``trace`` holds the records gathered so far."""

    def __init__(self, message: str, trace: BoTrace):
        super().__init__(message)
        self.trace = trace


def rescale_responses(y, eps: float = RESCALE_EPS) -> tuple[np.ndarray, float]:
    """Divide responses by their largest magnitude (at least ``eps``)."""
    y = np.asarray(y, dtype=np.float64)
    scale = max(float(np.max(np.abs(y))) if y.size else 0.0, eps)
    return y / scale, scale


def check_sizes(sizes: Sequence[int], width: int, height: int) -> None:
    if max(sizes) > max(width, height):
        raise ValueError(f"window size {max(sizes)} exceeds the {width}x{height} image")


def extract_saliency(
    model: gp.GpModel,
    width: int,
    height: int,
    sizes: Sequence[int],
    prediction_stride: int = 4,
    reduction: str = "mean",
    scale: float = 1.0,
) -> SaliencyMap:
    """Render the posterior mean as a normalized per-pixel map.

    The mean is predicted on the strided (u, v) lattice for every window
    size, reduced over sizes, bilinearly upsampled and normalized.
    """
    if reduction not in REDUCTIONS:
        raise ValueError(f"reduction must be one of {REDUCTIONS}, got {reduction!r}")
    grid = CandidateGrid(width, height, tuple(sizes), prediction_stride)
    mean = gp.predict(model, grid.points()).mean.reshape(grid.n_v, grid.n_u, len(grid.sizes))
    coarse = mean.mean(axis=2) if reduction == "mean" else mean.max(axis=2)
    full = upsample_bilinear(coarse * scale, grid.vs, grid.us, height, width)
    return normalize_map(SaliencyMap(full))


def fit_surrogate(points: np.ndarray, ys: np.ndarray, hp: gp.GpHyperparams) -> tuple[gp.GpModel, float]:
    scaled, scale = rescale_responses(ys)
    return gp.fit(gp.TrainingSet(points, scaled), hp), scale


def _converged(y_best: list[float], iterations_done: int) -> bool:
    if iterations_done < 100 or len(y_best) <= 50:
        return False
    return y_best[-1] - y_best[-51] <= 1e-4


def run(model: Model, image: Image, config: BoConfig = BoConfig()) -> tuple[SaliencyMap, BoTrace]:
    """Occlusion saliency by sequential GP/EI sampling of (u, v, s).

    Uses ``n_init`` uniformly drawn candidates followed by up to
    ``config.iterations`` acquisition steps, then renders the map from the
    final posterior mean. Deterministic for a fixed seed and a deterministic
    model.
    """
    check_sizes(config.sizes, image.width, image.height)
    acq = AcquisitionConfig(config.formula)
    grid = CandidateGrid(image.width, image.height, config.sizes, config.prediction_stride)
    candidates = grid.points()
    rng = np.random.default_rng(config.seed)
    trace = BoTrace()
    start_queries = model.n_queries
    points: list[tuple[int, int, int]] = []
    ys: list[float] = []

    def observe(point, phase, acquisition=None, fit_seconds=None):
        u, v, s = point
        try:
            d = delta(model, image, blank_window(image, u, v, s, config.fill))
        except QueryError as exc:
            trace.query_count = model.n_queries - start_queries
            raise RunAborted(f"model query failed at step {len(trace.records)}: {exc}", trace) from exc
        points.append((int(u), int(v), int(s)))
        ys.append(d.y)
        best = max(ys)
        trace.records.append(IterationRecord(
            len(trace.records), phase, int(u), int(v), int(s), d.y, best, acquisition, fit_seconds,
        ))

    for idx in sample_initial(grid, config.n_init, rng):
        observe(grid.point(idx), "init")

    for i in range(config.iterations):
        t0 = time.perf_counter()
        surrogate, scale = fit_surrogate(np.array(points, dtype=np.float64), np.array(ys), config.hp)
        fit_seconds = time.perf_counter() - t0
        posterior = gp.predict(surrogate, candidates)
        try:
            sel = select_next(
                posterior, grid, gp.TrainingSet(points, np.array(ys) / scale), acq,
                y_ref=ys[-1] / scale,
            )
        except CandidatesExhausted:
            trace.stopped = "exhausted"
            break
        observe(sel.point, "bo", sel.value, fit_seconds)
        if config.stop_on_convergence and _converged(trace.y_best, i + 1):
            trace.stopped = "converged"
            break

    surrogate, scale = fit_surrogate(np.array(points, dtype=np.float64), np.array(ys), config.hp)
    trace.scale = scale
    trace.query_count = model.n_queries - start_queries
    smap = extract_saliency(
        surrogate, image.width, image.height, config.sizes,
        config.prediction_stride, config.reduction, scale,
    )
    return smap, trace
