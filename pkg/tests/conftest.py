import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from spectra.image_io import CLASS_NAMES

DATA = Path(__file__).parent / "data"


def write_png(path, array):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(array, dtype=np.uint8)).save(path)
    return path


def make_tree(root, per_class, size=16, seed=0, dirnames=CLASS_NAMES):
    """Create class directories with seeded random gray PNGs; returns the paths."""
    rng = np.random.default_rng(seed)
    paths = []
    for name, n in zip(dirnames, per_class):
        for i in range(n):
            img = rng.integers(0, 256, size=(size, size))
            paths.append(write_png(Path(root) / name / f"img_{i:03d}.png", img))
    return paths


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "ACCEPTANCE_LINES", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
