"""Saliency evaluation: bounding-box saliency ratio, random-sampling control, summaries."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .acquisition import CandidateGrid, sample_initial
from .bo import check_sizes, extract_saliency, fit_surrogate
from .gp import GpHyperparams
from .image import DEFAULT_FILL, BoundingBox, Image, SaliencyMap, blank_window, normalize_map
from .models import Model, delta


@dataclass(frozen=True)
class RatioResult:
    r_sal: float
    inside_mass: float
    total_mass: float
    degenerate: bool = False


def saliency_ratio(smap: SaliencyMap, box: BoundingBox) -> RatioResult:
    """Share of the map's mass that falls inside ``box``.

    Negative values are clamped to zero first. A map with no mass gives
    ``r_sal = 0`` and ``degenerate=True``.
    """
    box.check_within(smap.width, smap.height)
    vals = normalize_map(smap).values
    total = float(vals.sum())
    inside = float(vals[box.slices].sum())
    if total == 0.0:
        return RatioResult(0.0, 0.0, 0.0, degenerate=True)
    return RatioResult(min(inside / total, 1.0), inside, total)


def random_baseline(
    model: Model,
    image: Image,
    budget: int,
    sizes: Sequence[int],
    seed: int = 0,
    prediction_stride: int = 4,
    reduction: str = "mean",
    hp: GpHyperparams = GpHyperparams(),
    fill: float = DEFAULT_FILL,
) -> SaliencyMap:
    """Same surrogate and rendering as the BO loop, but with uniformly drawn samples.

    Draws ``budget`` distinct candidates from the same grid the BO loop
    searches, so any difference from it comes from the acquisition rule.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    check_sizes(sizes, image.width, image.height)
    grid = CandidateGrid(image.width, image.height, tuple(sizes), prediction_stride)
    rng = np.random.default_rng(seed)
    points, ys = [], []
    for idx in sample_initial(grid, budget, rng):
        u, v, s = grid.point(idx)
        ys.append(delta(model, image, blank_window(image, u, v, s, fill)).y)
        points.append((u, v, s))
    surrogate, scale = fit_surrogate(np.array(points, dtype=np.float64), np.array(ys), hp)
    return extract_saliency(surrogate, image.width, image.height, sizes, prediction_stride, reduction, scale)


@dataclass(frozen=True)
class DistributionSummary:
    min: float
    q1: float
    mean: float
    q3: float
    max: float
    outliers: tuple[float, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {"min": self.min, "q1": self.q1, "mean": self.mean, "q3": self.q3,
                "max": self.max, "outliers": list(self.outliers)}


def summarize(values: Sequence[float]) -> DistributionSummary:
    """Min, quartiles, mean, max and low-side outliers (below q1 - 1.5 IQR).

    Quartiles use linear interpolation between order statistics
    (``numpy.percentile`` default), so for 1..5 they are 2 and 4.
    """
    vals = np.asarray(list(values), dtype=np.float64)
    if vals.size == 0:
        raise ValueError("cannot summarize an empty list")
    q1, q3 = np.percentile(vals, [25, 75])
    low = q1 - 1.5 * (q3 - q1)
    outliers = tuple(float(x) for x in np.sort(vals[vals < low]))
    return DistributionSummary(float(vals.min()), float(q1), float(vals.mean()),
                               float(q3), float(vals.max()), outliers)


@dataclass(frozen=True)
class ManifestRow:
    image: str
    box: BoundingBox
    target: str


def read_manifest(path) -> list[ManifestRow]:
    """CSV with columns ``image,x0,y0,w,h,target``; image paths resolve relative to the manifest."""
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"image", "x0", "y0", "w", "h", "target"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: manifest missing columns {sorted(missing)}")
        for rec in reader:
            img = Path(rec["image"])
            if not img.is_absolute():
                img = path.parent / img
            box = BoundingBox(int(rec["x0"]), int(rec["y0"]), int(rec["w"]), int(rec["h"]))
            rows.append(ManifestRow(str(img), box, rec["target"]))
    return rows
