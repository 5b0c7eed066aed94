import numpy as np
import pytest

from wdip import synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def scene64():
    return synthetic.load_scene("camera", 64)


@pytest.fixture(scope="session")
def scene32():
    return synthetic.load_scene("camera", 32)


def wraparound_convolve(image, kernel):
    """Direct double loop over the kernel support with periodic indexing."""
    h, w = image.shape
    n = kernel.shape[0]
    c = (n - 1) // 2
    out = np.zeros_like(image, dtype=np.float64)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for i in range(n):
                for j in range(n):
                    acc += kernel[i, j] * image[(y - (i - c)) % h, (x - (j - c)) % w]
            out[y, x] = acc
    return out


VERDICTS = []


def record_verdict(criterion, ok, detail):
    line = f"CRITERION {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance verdicts")
        for line in sorted(VERDICTS, key=lambda s: int(s.split(":")[0].split()[-1])):
            terminalreporter.write_line(line)
