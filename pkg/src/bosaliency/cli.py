"""Command-line interface.

Exit codes: 0 success, 1 usage or input error, 2 model adapter failure.
Errors are reported as a single ``error: <kind>: <message>`` line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, bo
from .bench import METHODS, BenchConfig, run_bench
from .exhaustive import SweepConfig, run_exhaustive
from .gp import GpHyperparams
from .image import DEFAULT_FILL, load_image, load_map_csv, save_heatmap, save_map_csv
from .metrics import random_baseline, read_manifest, saliency_ratio, summarize
from .models import QueryError, SyntheticBoxModel, model_from_spec

FORMULA_NAMES = {"standard": "standard-ei", "paper": "paper-literal-ei"}

# Flat config keys, their defaults and types. Flags override the config file.
DEFAULTS = {
    "image": None,
    "model": None,
    "target": "0",
    "iterations": 200,
    "n_init": 5,
    "sizes": list(bo.PAPER_SIZES),
    "fill": DEFAULT_FILL,
    "stride": 1,
    "prediction_stride": 4,
    "reduction": "mean",
    "seed": 0,
    "formula": "standard-ei",
    "accumulation": "center-assign",
    "budget": 200,
    "sigma2": 1.0,
    "lengthscale": 12.0,
    "nu": 2.5,
    "jitter": 1e-6,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _sizes(text: str) -> list[int]:
    try:
        sizes = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not sizes:
        raise argparse.ArgumentTypeError("at least one size required")
    return sizes


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bosaliency", description="Black-box occlusion saliency maps.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def saliency_args(p, exhaustive=False, random=False):
        p.add_argument("--config", type=Path, help="flat JSON file of option defaults")
        p.add_argument("--image", help="input raster (PNG/PPM/PGM)")
        p.add_argument("--target", help="target class label sent to the model")
        p.add_argument("--model", help="synthetic:<spec> | cmd:<argv> | url:<url>")
        p.add_argument("--model-url", dest="model_url", help="shorthand for --model url:<url>")
        p.add_argument("--sizes", type=_sizes, help="window sizes, comma separated")
        p.add_argument("--fill", type=float, help="blanking value in [0, 1] (default 128/255)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")
        if exhaustive:
            p.add_argument("--stride", type=int)
            p.add_argument("--accumulation", choices=["center-assign", "window-spread"])
        else:
            p.add_argument("--prediction-stride", dest="prediction_stride", type=int)
            p.add_argument("--reduction", choices=["mean", "max"])
        if not exhaustive and not random:
            p.add_argument("--iterations", type=int)
            p.add_argument("--init", dest="n_init", type=int)
            p.add_argument("--formula", choices=sorted(FORMULA_NAMES))
        if random:
            p.add_argument("--budget", type=int)

    saliency_args(sub.add_parser("bayes", help="BO occlusion saliency"))
    saliency_args(sub.add_parser("exhaustive", help="sliding-window sweep"), exhaustive=True)
    saliency_args(sub.add_parser("random-baseline", help="uniform sampling + same GP"), random=True)

    ev = sub.add_parser("eval", help="r_sal over a manifest of images and boxes")
    saliency_args(ev)
    ev.add_argument("--manifest", type=Path, required=True)
    ev.add_argument("--method", choices=["bayes", "exhaustive", "random-baseline"], default="bayes")
    ev.add_argument("--stride", type=int)
    ev.add_argument("--budget", type=int)

    rd = sub.add_parser("render", help="CSV map to heatmap raster")
    rd.add_argument("--map", type=Path, required=True)
    rd.add_argument("--out", type=Path, required=True)
    rd.add_argument("--colormap", choices=["gray", "viridis"], default="gray")
    rd.add_argument("--force", action="store_true")

    bn = sub.add_parser("bench", help="synthetic benchmark: BO vs random vs exhaustive")
    bn.add_argument("--seeds", type=int, default=20, help="run seeds 0..N-1")
    bn.add_argument("--out", type=Path, required=True)
    bn.add_argument("--force", action="store_true")
    bn.add_argument("--budget", type=int)
    bn.add_argument("--init", dest="n_init", type=int)
    bn.add_argument("--formula", choices=sorted(FORMULA_NAMES))
    return parser


def resolve_options(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicitly given flags."""
    opts = dict(DEFAULTS)
    cfg_path = getattr(args, "config", None)
    if cfg_path is not None:
        try:
            loaded = json.loads(Path(cfg_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {cfg_path}: {exc}") from None
        if not isinstance(loaded, dict):
            raise UsageError(f"config {cfg_path} must hold a JSON object")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys {sorted(unknown)}")
        opts.update(loaded)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    if getattr(args, "model_url", None):
        opts["model"] = "url:" + args.model_url
    opts["formula"] = FORMULA_NAMES.get(opts["formula"], opts["formula"])
    return opts


def _hp(opts) -> GpHyperparams:
    return GpHyperparams(opts["sigma2"], opts["lengthscale"], opts["nu"], opts["jitter"])


def _bo_config(opts) -> bo.BoConfig:
    return bo.BoConfig(
        iterations=opts["iterations"], n_init=opts["n_init"], sizes=tuple(opts["sizes"]),
        fill=opts["fill"], prediction_stride=opts["prediction_stride"],
        reduction=opts["reduction"], seed=opts["seed"], hp=_hp(opts), formula=opts["formula"],
    )


def _guard_outputs(out: Path, names, force: bool) -> None:
    existing = [n for n in names if (out / n).exists()]
    if existing and not force:
        raise UsageError(f"{out}: would overwrite {existing}; pass --force")
    out.mkdir(parents=True, exist_ok=True)


def _run_method(method: str, model, image, opts):
    """Returns (map, trace or None, query count)."""
    if method == "bayes":
        smap, trace = bo.run(model, image, _bo_config(opts))
        return smap, trace, trace.query_count
    if method == "exhaustive":
        sweep = SweepConfig(tuple(opts["sizes"]), opts["stride"], opts["fill"], opts["accumulation"])
        smap, n = run_exhaustive(model, image, sweep)
        return smap, None, n
    start = model.n_queries
    smap = random_baseline(
        model, image, opts["budget"], tuple(opts["sizes"]), seed=opts["seed"],
        prediction_stride=opts["prediction_stride"], reduction=opts["reduction"],
        hp=_hp(opts), fill=opts["fill"],
    )
    return smap, None, model.n_queries - start


def cmd_saliency(args, method: str) -> int:
    opts = resolve_options(args)
    if not opts["image"]:
        raise UsageError("--image is required")
    if not opts["model"]:
        raise UsageError("--model is required")
    names = ["map.png", "map.csv", "run.json"] + (["trace.jsonl"] if method == "bayes" else [])
    _guard_outputs(args.out, names, args.force)
    image = load_image(opts["image"])
    model = model_from_spec(opts["model"], image.width, image.height, opts["target"], opts["fill"])
    run_info = {"command": method, "version": __version__, "options": opts, "model_config": model.config()}
    try:
        with model:
            smap, trace, n_queries = _run_method(method, model, image, opts)
    except bo.RunAborted as exc:
        exc.trace.write_jsonl(args.out / "trace.jsonl")
        run_info["aborted"] = str(exc)
        _write_json(args.out / "run.json", run_info)
        raise
    save_heatmap(smap, args.out / "map.png")
    save_map_csv(smap, args.out / "map.csv")
    if trace is not None:
        trace.write_jsonl(args.out / "trace.jsonl")
        run_info["stopped"] = trace.stopped
        run_info["response_scale"] = trace.scale
    run_info["query_count"] = n_queries
    _write_json(args.out / "run.json", run_info)
    print(f"wrote {args.out} ({n_queries} model queries)")
    return 0


def cmd_eval(args) -> int:
    opts = resolve_options(args)
    if not opts["model"]:
        raise UsageError("--model is required (use synthetic:manifest for per-row box oracles)")
    _guard_outputs(args.out, ["results.csv", "summary.json", "run.json"], args.force)
    rows = read_manifest(args.manifest)
    maps_dir = args.out / "maps"
    maps_dir.mkdir(exist_ok=True)
    results = []
    for i, row in enumerate(rows):
        image = load_image(row.image)
        if opts["model"] == "synthetic:manifest":
            model = SyntheticBoxModel(image.width, image.height, [row.box], [1.0],
                                      fill=opts["fill"], target=row.target)
        else:
            model = model_from_spec(opts["model"], image.width, image.height, row.target, opts["fill"])
        with model:
            smap, _, n_queries = _run_method(args.method, model, image, opts)
        ratio = saliency_ratio(smap, row.box)
        save_map_csv(smap, maps_dir / f"{i:04d}.csv")
        results.append({
            "image": row.image, "target": row.target, "r_sal": ratio.r_sal,
            "inside_mass": ratio.inside_mass, "total_mass": ratio.total_mass,
            "degenerate": ratio.degenerate, "queries": n_queries,
        })
    with open(args.out / "results.csv", "w") as fh:
        keys = list(results[0]) if results else ["image", "target", "r_sal"]
        fh.write(",".join(keys) + "\n")
        for r in results:
            fh.write(",".join(str(r[k]) for k in keys) + "\n")
    summary = summarize([r["r_sal"] for r in results]).to_dict() if results else None
    _write_json(args.out / "summary.json", {"method": args.method, "n": len(results), "r_sal": summary})
    _write_json(args.out / "run.json", {"command": "eval", "version": __version__, "method": args.method,
                                        "manifest": str(args.manifest), "options": opts})
    print(f"evaluated {len(results)} images; mean r_sal {summary['mean'] if summary else float('nan'):.4f}")
    return 0


def cmd_render(args) -> int:
    if args.out.exists() and not args.force:
        raise UsageError(f"{args.out} exists; pass --force")
    save_heatmap(load_map_csv(args.map), args.out, args.colormap)
    return 0


def cmd_bench(args) -> int:
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    _guard_outputs(args.out, ["summary.json", "summary.csv", "run.json"], args.force)
    cfg = BenchConfig()
    overrides = {}
    if args.budget is not None:
        overrides["budget"] = args.budget
    if args.n_init is not None:
        overrides["n_init"] = args.n_init
    if args.formula is not None:
        overrides["formula"] = FORMULA_NAMES[args.formula]
    if overrides:
        cfg = BenchConfig(**{**cfg.__dict__, **overrides})
    result = run_bench(range(args.seeds), cfg, args.out)
    _write_json(args.out / "run.json", {"command": "bench", "version": __version__,
                                        "seeds": args.seeds, "config": cfg.to_dict()})
    print(f"{'method':<11} {'min':>7} {'q1':>7} {'mean':>7} {'q3':>7} {'max':>7}")
    for name in METHODS:
        s = result["summary"][name]
        print(f"{name:<11} {s['min']:7.4f} {s['q1']:7.4f} {s['mean']:7.4f} {s['q3']:7.4f} {s['max']:7.4f}")
    print(f"BO beats random on {result['bo_wins_vs_random']}/{args.seeds} seeds; "
          f"BO argmax inside box on {result['bo_argmax_in_box']}/{args.seeds}")
    return 0


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _fail(kind: str, exc: BaseException, code: int) -> int:
    msg = " ".join(str(exc).split()) or type(exc).__name__
    print(f"error: {kind}: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command in ("bayes", "exhaustive", "random-baseline"):
            return cmd_saliency(args, args.command)
        if args.command == "eval":
            return cmd_eval(args)
        if args.command == "render":
            return cmd_render(args)
        return cmd_bench(args)
    except (QueryError, bo.RunAborted) as exc:
        return _fail("model", exc, 2)
    except UsageError as exc:
        return _fail("usage", exc, 1)
    except (ValueError, OSError, KeyError, TypeError) as exc:
        return _fail("input", exc, 1)


if __name__ == "__main__":
    sys.exit(main())
