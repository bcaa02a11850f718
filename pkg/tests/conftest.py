import math

import numpy as np
import pytest

from semmap.catalog import ClassCatalog
from semmap.harness import config_from_dict
from semmap.semantic_grid import GridGeometry

PLACES = ["corridor", "office", "kitchenette"]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def places():
    return ClassCatalog(PLACES)


@pytest.fixture
def small_geometry():
    return GridGeometry(0.1, 20, 20)


def three_room_dict(frames=600, **extra):
    d = {"catalog": {"base": list(PLACES)},
         "world": "three_room",
         "trajectory": {"waypoints": "three_room", "frames": frames},
         "noise": {"accuracy": 0.75, "peak_mass": 0.7},
         "gate": {"camera_fov_half_angle": math.radians(30)},
         "seed": 7}
    d.update(extra)
    return d


@pytest.fixture
def three_room_cfg(tmp_path):
    return config_from_dict(three_room_dict(), tmp_path)


# -- acceptance report ---------------------------------------------------------

_ACCEPTANCE: dict[int, tuple[bool, str, str]] = {}


class _Criterion:
    def __init__(self, number, title):
        self.number, self.title, self.notes = number, title, []

    def note(self, text):
        self.notes.append(text)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACCEPTANCE[self.number] = (exc_type is None, self.title, "; ".join(self.notes))
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, title, notes = _ACCEPTANCE[n]
        line = f"[{'PASS' if ok else 'FAIL'}] {n:>2}. {title}"
        terminalreporter.write_line(line + (f"  ({notes})" if notes else ""))
