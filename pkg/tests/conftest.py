import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dpstack.data import LabeledDataset, SynthSpec, synth_generate  # noqa: E402


def random_dataset(rng, n=60, d=5, scale=1.0):
    X = rng.standard_normal((n, d)) * scale
    y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    y[0], y[1] = 1.0, -1.0
    return LabeledDataset(X, y)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def synth_small():
    spec = SynthSpec(n=800, d=20, k_true=4, strengths=(2.0, 1.0, 0.5, 0.25), informative_fraction=(1,) * 4)
    ds, imp = synth_generate(spec, np.random.default_rng(7))
    return ds, imp


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
