"""Black-box occlusion saliency maps via Bayesian optimisation over window position and size."""

__version__ = "0.1.0"

from .image import BoundingBox, Image, SaliencyMap, blank_window, load_image, normalize_map  # noqa: E402
from .models import Model, QueryError, delta, make_synthetic_box, make_synthetic_two_box  # noqa: E402
from .gp import GpHyperparams, TrainingSet, fit, predict  # noqa: E402
from .bo import BoConfig, run  # noqa: E402
from .exhaustive import SweepConfig, run_exhaustive  # noqa: E402
from .metrics import random_baseline, saliency_ratio, summarize  # noqa: E402

__all__ = [
    "BoundingBox", "Image", "SaliencyMap", "blank_window", "load_image", "normalize_map",
    "Model", "QueryError", "delta", "make_synthetic_box", "make_synthetic_two_box",
    "GpHyperparams", "TrainingSet", "fit", "predict",
    "BoConfig", "run", "SweepConfig", "run_exhaustive",
    "random_baseline", "saliency_ratio", "summarize",
]
