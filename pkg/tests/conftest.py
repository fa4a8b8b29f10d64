import numpy as np
import pytest

from bosaliency.image import Image


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def noise_image(rng, h, w, c=3):
    """Random 8-bit image that never contains the fill level 128."""
    px = rng.integers(0, 255, size=(h, w, c))
    px[px >= 128] += 1
    return Image.from_uint8(px.astype(np.uint8))


@pytest.fixture(scope="session")
def bench_result():
    import time

    from bosaliency.bench import run_bench

    t0 = time.perf_counter()
    result = run_bench(range(20))
    result["_seconds"] = time.perf_counter() - t0
    return result


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
