import dataclasses
import sys
from pathlib import Path

import numpy as np
import pytest

from wxaug.augment import derive_seed
from wxaug.dataset import Sample, generate_toy_dataset
from wxaug.toyworld import SceneSpec, generate_scene

sys.path.insert(0, str(Path(__file__).parent))

GOLDEN = Path(__file__).parent / "golden"


def toy_samples(n, seed=0, **kw):
    out = []
    for i in range(n):
        frame, gts = generate_scene(SceneSpec(seed=derive_seed(seed, i), **kw))
        frame.frame_id = i
        image_id = f"{i:06d}"
        out.append(Sample(image_id, frame, [dataclasses.replace(g, image_id=image_id) for g in gts]))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_toy_samples():
    return toy_samples(6, seed=3, width=320, height=180, n_cones=5, cone_min=20, cone_max=40)


@pytest.fixture
def toy_dataset(tmp_path):
    return generate_toy_dataset(tmp_path / "toy", 4, seed=7, width=200, height=120,
                                n_cones=4, cone_min=18, cone_max=34)


_acceptance = {}


def pytest_runtest_logreport(report):
    if "acceptance" not in report.keywords:
        return
    if report.when == "call" or report.outcome != "passed":
        prev = _acceptance.get(report.nodeid)
        if prev != "FAIL":
            _acceptance[report.nodeid] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, outcome in _acceptance.items():
        terminalreporter.write_line(f"{outcome}  {nodeid.split('::')[-1]}")
