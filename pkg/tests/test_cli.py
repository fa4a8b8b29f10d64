import json
import sys
from pathlib import Path

import numpy as np
import pytest

from bosaliency.cli import main
from bosaliency.image import load_image, load_map_csv, save_image, save_map_csv, SaliencyMap

from conftest import noise_image

WORKER = Path(__file__).parent / "workers" / "mean_worker.py"
SYN = "synthetic:box=10,12,10,8"
SMALL = ["--sizes", "6,12", "--iterations", "8", "--init", "2", "--prediction-stride", "4"]


@pytest.fixture
def image_path(tmp_path, rng):
    path = tmp_path / "in.png"
    save_image(noise_image(rng, 32, 32), path)
    return path


def test_bayes_writes_outputs(tmp_path, image_path, capsys):
    out = tmp_path / "run"
    assert main(["bayes", "--image", str(image_path), "--model", SYN, "--out", str(out), *SMALL]) == 0
    for name in ("map.png", "map.csv", "trace.jsonl", "run.json"):
        assert (out / name).exists()
    run = json.loads((out / "run.json").read_text())
    assert run["query_count"] == 11
    assert run["options"]["sizes"] == [6, 12]
    assert len((out / "trace.jsonl").read_text().splitlines()) == 10
    assert load_image(out / "map.png").to_uint8().max() == 255


def test_run_json_reproduces_bit_exactly(tmp_path, image_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["bayes", "--image", str(image_path), "--model", SYN, "--seed", "5", "--out", str(out1), *SMALL]) == 0
    cfg = json.loads((out1 / "run.json").read_text())["options"]
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    assert main(["bayes", "--config", str(tmp_path / "cfg.json"), "--out", str(out2)]) == 0
    for name in ("map.csv", "trace.jsonl"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_flags_override_config(tmp_path, image_path):
    (tmp_path / "cfg.json").write_text(json.dumps({"iterations": 3, "n_init": 1, "sizes": [6], "seed": 2}))
    out = tmp_path / "o"
    args = ["bayes", "--config", str(tmp_path / "cfg.json"), "--image", str(image_path),
            "--model", SYN, "--iterations", "4", "--out", str(out)]
    assert main(args) == 0
    run = json.loads((out / "run.json").read_text())
    assert run["options"]["iterations"] == 4 and run["options"]["n_init"] == 1
    assert run["query_count"] == 6


def test_unknown_config_key(tmp_path, image_path, capsys):
    (tmp_path / "cfg.json").write_text(json.dumps({"iterationz": 3}))
    code = main(["bayes", "--config", str(tmp_path / "cfg.json"), "--image", str(image_path),
                 "--model", SYN, "--out", str(tmp_path / "o")])
    assert code == 1
    assert capsys.readouterr().err.startswith("error: usage:")


def test_refuses_overwrite(tmp_path, image_path, capsys):
    out = tmp_path / "run"
    args = ["bayes", "--image", str(image_path), "--model", SYN, "--out", str(out), *SMALL]
    assert main(args) == 0
    assert main(args) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and "--force" in err[0]
    assert main(args + ["--force"]) == 0


def test_unreachable_url_exit_2(tmp_path, image_path, capsys, monkeypatch):
    monkeypatch.setenv("SALIENCY_MODEL_TIMEOUT_SECS", "2")
    code = main(["bayes", "--image", str(image_path), "--model-url", "http://127.0.0.1:9/x",
                 "--out", str(tmp_path / "o"), *SMALL])
    assert code == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error: model:")
    run = json.loads((tmp_path / "o" / "run.json").read_text())
    assert "aborted" in run


def test_subprocess_model_via_cli(tmp_path, image_path):
    out = tmp_path / "o"
    spec = f"cmd:{sys.executable} {WORKER}"
    assert main(["bayes", "--image", str(image_path), "--model", spec, "--out", str(out), *SMALL]) == 0
    assert json.loads((out / "run.json").read_text())["model_config"]["kind"] == "subprocess"


def test_usage_errors(tmp_path, image_path, capsys):
    assert main([]) == 1
    assert main(["bayes", "--image", str(image_path), "--out", str(tmp_path / "o")]) == 1
    assert main(["bayes", "--image", str(image_path), "--model", SYN, "--sizes", "a,b",
                 "--out", str(tmp_path / "o")]) == 1
    assert main(["bayes", "--image", str(tmp_path / "missing.png"), "--model", SYN,
                 "--out", str(tmp_path / "o2")]) == 1


def test_exhaustive_and_random(tmp_path, image_path):
    out = tmp_path / "ex"
    assert main(["exhaustive", "--image", str(image_path), "--model", SYN, "--sizes", "6",
                 "--stride", "4", "--out", str(out)]) == 0
    assert json.loads((out / "run.json").read_text())["query_count"] == 8 * 8 + 1
    assert not (out / "trace.jsonl").exists()
    out = tmp_path / "rb"
    assert main(["random-baseline", "--image", str(image_path), "--model", SYN, "--sizes", "6,12",
                 "--budget", "15", "--out", str(out)]) == 0
    assert json.loads((out / "run.json").read_text())["query_count"] == 16


def test_render(tmp_path, rng):
    save_map_csv(SaliencyMap(rng.random((5, 7)) * 0.01 - 0.002), tmp_path / "m.csv")
    assert main(["render", "--map", str(tmp_path / "m.csv"), "--out", str(tmp_path / "m.png")]) == 0
    assert load_image(tmp_path / "m.png").to_uint8().max() == 255
    assert main(["render", "--map", str(tmp_path / "m.csv"), "--out", str(tmp_path / "m.png")]) == 1
    assert main(["render", "--map", str(tmp_path / "m.csv"), "--out", str(tmp_path / "m.png"),
                 "--colormap", "viridis", "--force"]) == 0


def test_eval_manifest(tmp_path, rng):
    for name in ("a.png", "b.png"):
        save_image(noise_image(rng, 32, 32), tmp_path / name)
    (tmp_path / "m.csv").write_text("image,x0,y0,w,h,target\na.png,4,4,10,10,x\nb.png,15,10,12,12,y\n")
    out = tmp_path / "ev"
    assert main(["eval", "--manifest", str(tmp_path / "m.csv"), "--model", "synthetic:manifest",
                 "--method", "exhaustive", "--sizes", "6", "--stride", "2", "--out", str(out)]) == 0
    lines = (out / "results.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[0].startswith("image,target,r_sal")
    summary = json.loads((out / "summary.json").read_text())
    assert summary["n"] == 2 and 0 < summary["r_sal"]["mean"] <= 1
    assert (out / "maps" / "0001.csv").exists()


def test_bench_small(tmp_path, capsys):
    out = tmp_path / "b"
    assert main(["bench", "--seeds", "2", "--budget", "30", "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "bo " in printed and "random" in printed and "exhaustive" in printed
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary["summary"]) == {"bo", "random", "exhaustive"}
    assert (out / "summary.csv").read_text().startswith("method,min,q1,mean,q3,max")
    assert (out / "seed_0001" / "bo_trace.jsonl").exists()
