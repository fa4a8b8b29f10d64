"""Candidate grid over (u, v, s) and Expected Improvement selection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .gp import PosteriorPrediction, TrainingSet

STANDARD = "standard-ei"
PAPER_LITERAL = "paper-literal-ei"
FORMULAS = (STANDARD, PAPER_LITERAL)


class CandidatesExhausted(Exception):
    """Every candidate on the grid has already been sampled."""


@dataclass(frozen=True)
class CandidateGrid:
    """Window centres on a strided pixel lattice crossed with a set of window sizes.

    Centres are ``0, stride, 2*stride, ...`` along each axis. Points are
    ordered row-major over ``(v, u)`` with the size index varying fastest.
    """

    width: int
    height: int
    sizes: tuple[int, ...]
    stride: int = 1

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if self.width < 1 or self.height < 1:
            raise ValueError("grid needs positive width and height")
        if not self.sizes or min(self.sizes) < 1:
            raise ValueError(f"sizes must be a non-empty set of positive ints, got {self.sizes}")
        if len(set(self.sizes)) != len(self.sizes):
            raise ValueError(f"duplicate window sizes in {self.sizes}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")

    @property
    def n_u(self) -> int:
        return math.ceil(self.width / self.stride)

    @property
    def n_v(self) -> int:
        return math.ceil(self.height / self.stride)

    @property
    def us(self) -> np.ndarray:
        return np.arange(0, self.width, self.stride)

    @property
    def vs(self) -> np.ndarray:
        return np.arange(0, self.height, self.stride)

    def __len__(self) -> int:
        return self.n_u * self.n_v * len(self.sizes)

    def points(self) -> np.ndarray:
        vv, uu, ss = np.meshgrid(self.vs, self.us, np.array(self.sizes), indexing="ij")
        return np.stack([uu.ravel(), vv.ravel(), ss.ravel()], axis=1).astype(np.float64)

    def point(self, index: int) -> tuple[int, int, int]:
        rest, k = divmod(int(index), len(self.sizes))
        iv, iu = divmod(rest, self.n_u)
        return iu * self.stride, iv * self.stride, self.sizes[k]

    def index_of(self, point) -> int | None:
        u, v, s = (float(x) for x in point)
        if s not in self.sizes or u % self.stride or v % self.stride:
            return None
        iu, iv = int(u) // self.stride, int(v) // self.stride
        if not (0 <= iu < self.n_u and 0 <= iv < self.n_v):
            return None
        return (iv * self.n_u + iu) * len(self.sizes) + self.sizes.index(int(s))


@dataclass(frozen=True)
class AcquisitionConfig:
    formula: str = STANDARD
    selection: str | None = None

    def __post_init__(self):
        if self.formula not in FORMULAS:
            raise ValueError(f"unknown formula {self.formula!r}; expected one of {FORMULAS}")
        expected = "argmax" if self.formula == STANDARD else "argmin"
        if self.selection is None:
            object.__setattr__(self, "selection", expected)
        elif self.selection != expected:
            raise ValueError(f"{self.formula} must be paired with {expected}, got {self.selection}")


def expected_improvement(mean, std, y_best, formula: str = STANDARD, y_ref=None):
    """Expected Improvement for maximisation.

    ``standard-ei`` is ``(m - y*) Phi(z) + sd phi(z)`` with ``z = (m - y*) / sd``.
    ``paper-literal-ei`` subtracts the density term and builds ``z`` from
    ``y_ref`` (the most recent observation; defaults to ``y_best``). Both
    return exactly 0 where ``sd == 0``. Works elementwise on arrays.
    """
    if formula not in FORMULAS:
        raise ValueError(f"unknown formula {formula!r}")
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    if np.any(std < 0):
        raise ValueError("std must be non-negative")
    if y_ref is None or formula == STANDARD:
        y_ref = y_best
    pos = std > 0
    safe = np.where(pos, std, 1.0)
    gap = mean - y_best
    z = (mean - y_ref) / safe
    if formula == STANDARD:
        ei = gap * norm.cdf(z) + safe * norm.pdf(z)
    else:
        ei = gap * norm.cdf(z) - safe * norm.pdf(z)
    ei = np.where(pos, ei, 0.0)
    if formula == STANDARD:
        # Cancellation can leave tiny negatives far below the incumbent.
        ei = np.maximum(ei, 0.0)
    return ei if ei.ndim else float(ei)


@dataclass(frozen=True)
class Selection:
    index: int
    point: tuple[int, int, int]
    value: float
    y_best: float


def sampled_mask(grid: CandidateGrid, training: TrainingSet) -> np.ndarray:
    mask = np.zeros(len(grid), dtype=bool)
    for p in training.points:
        idx = grid.index_of(p)
        if idx is not None:
            mask[idx] = True
    return mask


def select_next(
    posterior: PosteriorPrediction,
    grid: CandidateGrid,
    training: TrainingSet,
    config: AcquisitionConfig = AcquisitionConfig(),
    y_best: float | None = None,
    y_ref: float | None = None,
) -> Selection:
    """Score every unsampled candidate and return the best one (lowest index on ties).

    ``y_best`` defaults to the largest observed response.
    """
    if len(posterior.mean) != len(grid):
        raise ValueError(f"posterior covers {len(posterior.mean)} points, grid has {len(grid)}")
    if y_best is None:
        if len(training) == 0:
            raise ValueError("y_best needed when no observations exist")
        y_best = float(np.max(training.responses))
    scores = expected_improvement(posterior.mean, posterior.std, y_best, config.formula, y_ref)
    scores = np.atleast_1d(scores).copy()
    taken = sampled_mask(grid, training)
    if taken.all():
        raise CandidatesExhausted(f"all {len(grid)} candidates sampled")
    if config.selection == "argmax":
        scores[taken] = -np.inf
        idx = int(np.argmax(scores))
    else:
        scores[taken] = np.inf
        idx = int(np.argmin(scores))
    return Selection(idx, grid.point(idx), float(scores[idx]), float(y_best))


def sample_initial(grid: CandidateGrid, n: int, rng: np.random.Generator) -> list[int]:
    """``n`` distinct candidate indices drawn uniformly (fewer if the grid is smaller)."""
    n = min(int(n), len(grid))
    return [int(i) for i in rng.choice(len(grid), size=n, replace=False)]
