import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bosaliency.image import BoundingBox, SaliencyMap
from bosaliency.metrics import random_baseline, read_manifest, saliency_ratio, summarize
from bosaliency.models import make_synthetic_box

from conftest import noise_image


def test_mass_only_inside_box():
    vals = np.zeros((10, 10))
    vals[2:5, 3:7] = np.arange(12).reshape(3, 4) + 1
    r = saliency_ratio(SaliencyMap(vals), BoundingBox(3, 2, 4, 3))
    assert r.r_sal == 1.0 and not r.degenerate


def test_uniform_quarter():
    r = saliency_ratio(SaliencyMap(np.full((8, 8), 0.3)), BoundingBox(0, 0, 4, 4))
    assert abs(r.r_sal - 0.25) <= 1e-12


def test_mass_only_outside_box():
    vals = np.zeros((10, 10))
    vals[8:, 8:] = 1.0
    assert saliency_ratio(SaliencyMap(vals), BoundingBox(0, 0, 5, 5)).r_sal == 0.0


def test_degenerate_and_negative():
    r = saliency_ratio(SaliencyMap(np.full((4, 4), -2.0)), BoundingBox(0, 0, 2, 2))
    assert r.degenerate and r.r_sal == 0.0
    vals = np.full((4, 4), -1.0)
    vals[0, 0] = 2.0
    assert saliency_ratio(SaliencyMap(vals), BoundingBox(0, 0, 1, 1)).r_sal == 1.0
    with pytest.raises(ValueError):
        saliency_ratio(SaliencyMap(np.ones((4, 4))), BoundingBox(2, 2, 3, 3))


maps = st.integers(0, 2**32 - 1).map(lambda s: np.random.default_rng(s).random((12, 9)) ** 3)


@given(maps, st.floats(1e-3, 1e3))
def test_scale_invariance(vals, c):
    box = BoundingBox(2, 3, 4, 5)
    base = saliency_ratio(SaliencyMap(vals), box).r_sal
    assert saliency_ratio(SaliencyMap(vals * c), box).r_sal == pytest.approx(base, rel=1e-12)
    assert saliency_ratio(SaliencyMap(vals * 8.0), box).r_sal == base


@given(maps)
def test_full_box_gives_one(vals):
    assert saliency_ratio(SaliencyMap(vals), BoundingBox(0, 0, 9, 12)).r_sal == pytest.approx(1.0, abs=1e-15)


@given(maps, st.integers(0, 1000))
def test_moving_mass_inside_never_decreases(vals, k):
    box = BoundingBox(1, 1, 3, 3)
    vals = vals.copy()
    before = saliency_ratio(SaliencyMap(vals), box).r_sal
    outside = [(r, c) for r in range(12) for c in range(9) if not box.contains(c, r)]
    r, c = outside[k % len(outside)]
    amount = vals[r, c] / 2
    vals[r, c] -= amount
    vals[2, 2] += amount
    after = saliency_ratio(SaliencyMap(vals), box).r_sal
    assert after >= before - 1e-15


def test_ratio_consistency(rng):
    vals = rng.random((20, 20))
    r = saliency_ratio(SaliencyMap(vals), BoundingBox(4, 4, 6, 6))
    assert r.r_sal * r.total_mass == pytest.approx(r.inside_mass, rel=1e-12)


def test_summarize_examples():
    s = summarize([1, 2, 3, 4, 5])
    assert (s.min, s.q1, s.mean, s.q3, s.max) == (1, 2, 3, 4, 5)
    assert s.outliers == ()
    s = summarize([0.42])
    assert (s.min, s.q1, s.mean, s.q3, s.max, s.outliers) == (0.42,) * 5 + ((),)
    assert summarize([0, 0, 0, 100]).outliers == ()
    assert summarize([-100, 10, 11, 12, 13, 14]).outliers == (-100.0,)
    with pytest.raises(ValueError):
        summarize([])


def test_random_baseline(rng):
    img = noise_image(rng, 32, 32)
    box = BoundingBox(8, 8, 10, 10)
    with pytest.raises(ValueError):
        random_baseline(make_synthetic_box(32, 32, box), img, 0, (8,))
    a = random_baseline(make_synthetic_box(32, 32, box), img, 25, (8, 12), seed=4)
    model = make_synthetic_box(32, 32, box)
    b = random_baseline(model, img, 25, (8, 12), seed=4)
    assert np.array_equal(a.values, b.values)
    assert model.n_queries == 26


def test_read_manifest(tmp_path):
    (tmp_path / "m.csv").write_text("image,x0,y0,w,h,target\nimgs/a.png,1,2,3,4,dog\n/abs/b.png,0,0,5,5,cat\n")
    rows = read_manifest(tmp_path / "m.csv")
    assert rows[0].image == str(tmp_path / "imgs" / "a.png")
    assert rows[0].box == BoundingBox(1, 2, 3, 4) and rows[0].target == "dog"
    assert rows[1].image == "/abs/b.png"
    (tmp_path / "bad.csv").write_text("image,x0\nfoo,1\n")
    with pytest.raises(ValueError):
        read_manifest(tmp_path / "bad.csv")
