"""Synthetic benchmark: BO vs random sampling vs exhaustive sweep at a matched query budget."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bo
from .exhaustive import SweepConfig, run_exhaustive, stride_for_budget
from .image import DEFAULT_FILL, BoundingBox, Image, save_heatmap, save_map_csv
from .metrics import random_baseline, saliency_ratio, summarize
from .models import make_synthetic_box

METHODS = ("bo", "random", "exhaustive")


@dataclass(frozen=True)
class BenchConfig:
    image_size: int = 128
    box_size: int = 40
    sizes: tuple[int, ...] = (16, 32, 48)
    budget: int = 200
    n_init: int = 5
    prediction_stride: int = 4
    reduction: str = "mean"
    formula: str = "standard-ei"

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["sizes"] = list(self.sizes)
        return d


def synthetic_scene(seed: int, size: int = 128, box_size: int = 40) -> tuple[Image, BoundingBox]:
    """Random 8-bit RGB noise image and a uniformly placed square box.

    The fill level 128 is excluded from the noise so no pixel starts out
    looking blanked.
    """
    rng = np.random.default_rng([seed, 0x5A11])
    pixels = rng.integers(0, 255, size=(size, size, 3))
    pixels[pixels >= 128] += 1
    x0, y0 = (int(c) for c in rng.integers(0, size - box_size + 1, size=2))
    return Image.from_uint8(pixels.astype(np.uint8)), BoundingBox(x0, y0, box_size, box_size)


def run_seed(seed: int, config: BenchConfig = BenchConfig()) -> dict:
    image, box = synthetic_scene(seed, config.image_size, config.box_size)
    n = config.image_size
    row: dict = {"seed": seed, "box": [box.x0, box.y0, box.w, box.h]}
    maps = {}

    model = make_synthetic_box(n, n, box)
    bo_cfg = bo.BoConfig(
        iterations=config.budget - config.n_init, n_init=config.n_init, sizes=config.sizes,
        fill=DEFAULT_FILL, prediction_stride=config.prediction_stride,
        reduction=config.reduction, seed=seed, formula=config.formula,
    )
    maps["bo"], trace = bo.run(model, image, bo_cfg)
    row["bo_queries"] = trace.query_count

    model = make_synthetic_box(n, n, box)
    maps["random"] = random_baseline(
        model, image, config.budget, config.sizes, seed=seed,
        prediction_stride=config.prediction_stride, reduction=config.reduction,
    )
    row["random_queries"] = model.n_queries

    stride = stride_for_budget(n, n, len(config.sizes), config.budget)
    model = make_synthetic_box(n, n, box)
    maps["exhaustive"], row["exhaustive_queries"] = run_exhaustive(
        model, image, SweepConfig(config.sizes, stride, DEFAULT_FILL),
    )
    row["exhaustive_stride"] = stride

    for name in METHODS:
        row[f"{name}_rsal"] = saliency_ratio(maps[name], box).r_sal
        row[f"{name}_argmax_in_box"] = box.contains(*maps[name].argmax())
    row["_maps"] = maps
    row["_trace"] = trace
    return row


def run_bench(seeds, config: BenchConfig = BenchConfig(), out_dir=None) -> dict:
    """Run every seed; optionally write per-seed maps/traces and summary tables to ``out_dir``."""
    rows = [run_seed(int(s), config) for s in seeds]
    summary = {
        name: summarize([r[f"{name}_rsal"] for r in rows]).to_dict() for name in METHODS
    }
    bo_r = np.array([r["bo_rsal"] for r in rows])
    rnd_r = np.array([r["random_rsal"] for r in rows])
    result = {
        "config": config.to_dict(),
        "seeds": [r["seed"] for r in rows],
        "summary": summary,
        "bo_wins_vs_random": int(np.sum(bo_r > rnd_r)),
        "bo_argmax_in_box": int(sum(r["bo_argmax_in_box"] for r in rows)),
        "rows": [{k: v for k, v in r.items() if not k.startswith("_")} for r in rows],
    }
    if out_dir is not None:
        write_bench(rows, result, Path(out_dir))
    result["_rows"] = rows
    return result


def write_bench(rows: list[dict], result: dict, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for r in rows:
        d = out / f"seed_{r['seed']:04d}"
        d.mkdir(exist_ok=True)
        r["_trace"].write_jsonl(d / "bo_trace.jsonl")
        for name, smap in r["_maps"].items():
            save_map_csv(smap, d / f"{name}_map.csv")
            save_heatmap(smap, d / f"{name}_map.png")
    with open(out / "summary.json", "w") as fh:
        json.dump({k: v for k, v in result.items() if not k.startswith("_")}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "min", "q1", "mean", "q3", "max", "n_outliers"])
        for name in METHODS:
            s = result["summary"][name]
            w.writerow([name, s["min"], s["q1"], s["mean"], s["q3"], s["max"], len(s["outliers"])])
