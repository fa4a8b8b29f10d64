"""Images, the blanking primitive, bounding boxes and saliency-map containers.

Pixel values are stored as float64 in [0, 1] with shape ``(height, width,
channels)``. Coordinates follow the image convention: ``u`` is the column
(x) and ``v`` is the row (y).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

#: Canonical blanking colour: 128 on the 8-bit scale.
DEFAULT_FILL = 128.0 / 255.0


@dataclass(frozen=True, eq=False)
class Image:
    """An immutable H x W x C pixel grid with values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValueError(f"expected HxW, HxWx1 or HxWx3 data, got shape {arr.shape}")
        if arr.size == 0:
            raise ValueError("image must contain at least one pixel")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def to_uint8(self) -> np.ndarray:
        """Row-major H x W x C bytes on the 0..255 scale."""
        return np.rint(self.data * 255.0).astype(np.uint8)

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> Image:
        # Skips validation; caller guarantees a float64 HxWxC array in [0, 1].
        arr.setflags(write=False)
        obj = object.__new__(cls)
        object.__setattr__(obj, "data", arr)
        return obj

    @classmethod
    def from_uint8(cls, arr: np.ndarray) -> Image:
        return cls(np.asarray(arr, dtype=np.float64) / 255.0)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box: top-left corner ``(x0, y0)`` and extent ``w`` x ``h``."""

    x0: int
    y0: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box extent must be positive, got w={self.w}, h={self.h}")
        if self.x0 < 0 or self.y0 < 0:
            raise ValueError(f"box corner must be non-negative, got ({self.x0}, {self.y0})")

    @property
    def area(self) -> int:
        return self.w * self.h

    def fits(self, width: int, height: int) -> bool:
        return self.x0 + self.w <= width and self.y0 + self.h <= height

    def check_within(self, width: int, height: int) -> None:
        if not self.fits(width, height):
            raise ValueError(f"{self} does not fit inside a {width}x{height} image")

    def contains(self, u: float, v: float) -> bool:
        return self.x0 <= u < self.x0 + self.w and self.y0 <= v < self.y0 + self.h

    @property
    def slices(self) -> tuple[slice, slice]:
        """(row slice, column slice) selecting the box from an H x W array."""
        return slice(self.y0, self.y0 + self.h), slice(self.x0, self.x0 + self.w)


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    """One real value per pixel, shape ``(height, width)``."""

    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"saliency map must be a non-empty 2-D grid, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def argmax(self) -> tuple[int, int]:
        """(u, v) of the first maximum in row-major order."""
        v, u = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return int(u), int(v)


def window_bounds(center: int, s: int, limit: int) -> tuple[int, int]:
    """Clipped half-open ``[lo, hi)`` range of a size-``s`` window on one axis.

    The window starts ``s // 2`` pixels before the center, so even sizes
    extend one pixel further after the center than before it.
    """
    lo = center - s // 2
    hi = lo + s
    return max(lo, 0), min(hi, limit)


def window_slices(u: int, v: int, s: int, width: int, height: int) -> tuple[slice, slice]:
    r0, r1 = window_bounds(v, s, height)
    c0, c1 = window_bounds(u, s, width)
    return slice(r0, r1), slice(c0, c1)


def blank_window(image: Image, u: int, v: int, s: int, fill: float = DEFAULT_FILL) -> Image:
    """Return a copy of ``image`` with the s x s window centred at (u, v) set to ``fill``.

    The window is clipped at the image borders. ``u`` indexes columns and
    ``v`` indexes rows.
    """
    if not (0 <= u < image.width and 0 <= v < image.height):
        raise ValueError(f"window center ({u}, {v}) outside {image.width}x{image.height} image")
    if s < 1:
        raise ValueError(f"window size must be >= 1, got {s}")
    if not 0.0 <= fill <= 1.0:
        raise ValueError(f"fill must lie in [0, 1], got {fill}")
    out = image.data.copy()
    rows, cols = window_slices(int(u), int(v), int(s), image.width, image.height)
    out[rows, cols, :] = fill
    return Image._wrap(out)


def normalize_map(smap: SaliencyMap) -> SaliencyMap:
    """Clamp negatives to zero and rescale so the maximum is 1.

    An all-zero (or all-negative) map comes back as all zeros.
    """
    vals = np.maximum(smap.values, 0.0)
    top = vals.max()
    if top > 0.0:
        vals = vals / top
    else:
        vals = np.zeros_like(vals)
    return SaliencyMap(vals, dict(smap.meta))


def upsample_bilinear(grid: np.ndarray, vs, us, height: int, width: int) -> np.ndarray:
    """Bilinearly interpolate values known at rows ``vs`` and columns ``us``.

    Pixels beyond the outermost grid lines take the edge value.
    """
    grid = np.asarray(grid, dtype=np.float64)
    vs = np.asarray(vs, dtype=np.float64)
    us = np.asarray(us, dtype=np.float64)
    if grid.shape != (len(vs), len(us)):
        raise ValueError(f"grid shape {grid.shape} does not match {len(vs)}x{len(us)} coordinates")
    cols = np.arange(width, dtype=np.float64)
    rows = np.arange(height, dtype=np.float64)
    tmp = np.stack([np.interp(cols, us, row) for row in grid])
    return np.stack([np.interp(rows, vs, tmp[:, j]) for j in range(width)], axis=1)


def load_image(path) -> Image:
    """Read an 8-bit grayscale or RGB raster (PNG, PGM, PPM, ...)."""
    path = Path(path)
    try:
        with PILImage.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "P":
                im = im.convert("RGB")
                mode = "RGB"
            if mode not in ("L", "RGB"):
                raise ValueError(f"unsupported image mode {mode!r} in {path}; expected L or RGB")
            arr = np.asarray(im, dtype=np.uint8)
    except (OSError, SyntaxError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    return Image.from_uint8(arr)


def save_image(image: Image, path) -> None:
    arr = image.to_uint8()
    if image.channels == 1:
        arr = arr[:, :, 0]
    PILImage.fromarray(arr).save(Path(path))


# Anchor colours sampled from the viridis colour map; interpolated linearly.
_VIRIDIS_ANCHORS = np.array([
    [68, 1, 84],
    [72, 40, 120],
    [62, 74, 137],
    [49, 104, 142],
    [38, 130, 142],
    [31, 158, 137],
    [53, 183, 121],
    [109, 205, 89],
    [180, 222, 44],
    [253, 231, 37],
], dtype=np.float64)


def _viridis(vals: np.ndarray) -> np.ndarray:
    pos = np.linspace(0.0, 1.0, len(_VIRIDIS_ANCHORS))
    rgb = np.stack([np.interp(vals, pos, _VIRIDIS_ANCHORS[:, c]) for c in range(3)], axis=-1)
    return np.rint(rgb).astype(np.uint8)


def heatmap_array(smap: SaliencyMap, colormap: str = "gray") -> np.ndarray:
    """8-bit raster of the normalized map: H x W for gray, H x W x 3 for viridis."""
    vals = normalize_map(smap).values
    if colormap == "gray":
        return np.rint(vals * 255.0).astype(np.uint8)
    if colormap == "viridis":
        return _viridis(vals)
    raise ValueError(f"unknown colormap {colormap!r}; expected 'gray' or 'viridis'")


def save_heatmap(smap: SaliencyMap, path, colormap: str = "gray") -> None:
    PILImage.fromarray(heatmap_array(smap, colormap)).save(Path(path))


def save_map_csv(smap: SaliencyMap, path) -> None:
    """Write raw map values, one CSV row per image row, round-trippable bit-exactly."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in smap.values:
            writer.writerow([repr(float(x)) for x in row])


def load_map_csv(path) -> SaliencyMap:
    with open(path, newline="") as fh:
        rows = [[float(x) for x in row] for row in csv.reader(fh) if row]
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: expected a rectangular, non-empty CSV grid")
    return SaliencyMap(np.array(rows))
