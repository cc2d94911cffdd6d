import numpy as np
import pytest

from wbcinterp.dataset import PhantomSpec, generate_phantoms
from wbcinterp.raster import RasterImage

ACCEPTANCE_LINES: list[str] = []


def disk_mask(radius, size=160, center=None, semi=None):
    """Pixels whose centre lies inside a disk (or an axis-aligned ellipse with
    semi-axes ``semi = (rows, cols)``)."""
    cy, cx = center if center is not None else ((size - 1) / 2, (size - 1) / 2)
    a, b = semi if semi is not None else (radius, radius)
    yy, xx = np.mgrid[:size, :size]
    return RasterImage.binary(((yy - cy) / a) ** 2 + ((xx - cx) / b) ** 2 <= 1.0)


def rect_mask(h, w, size=160, top=40, left=40):
    m = np.zeros((size, size))
    m[top : top + h, left : left + w] = 1
    return RasterImage.binary(m)


def right_triangle_mask(side=60, size=160, top=40, left=40):
    m = np.zeros((size, size))
    for i in range(side):
        m[top + i, left : left + i + 1] = 1
    return RasterImage.binary(m)


def dice(a, b):
    a = np.asarray(a) > 0
    b = np.asarray(b) > 0
    return 2.0 * (a & b).sum() / (a.sum() + b.sum())


@pytest.fixture(scope="session")
def phantom_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("phantoms")
    generate_phantoms(PhantomSpec(n_per_class=4, seed=11), out)
    return out


@pytest.fixture
def record():
    """Collect one pass/fail line per acceptance criterion."""

    def _record(name, ok, detail=""):
        ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" -- {detail}" if detail else ""))
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
