import numpy as np
import pytest
from hypothesis import settings

from fbindex.geometry import compute_geometry
from fbindex.surfaces import (
    annulus_mesh,
    disk_mesh,
    gen_cylinder_in_slab,
    gen_disk_in_ball,
    gen_hemisphere_on_plane,
    gen_punctured_torus,
    genus2_mesh,
)

settings.register_profile("fbindex", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("fbindex")


@pytest.fixture(scope="session")
def cylinder():
    return gen_cylinder_in_slab(1.0, 4.0, 24)


@pytest.fixture(scope="session")
def cylinder48():
    return gen_cylinder_in_slab(1.0, 4.0, 48)


@pytest.fixture(scope="session")
def disk_ball():
    return gen_disk_in_ball(8)


@pytest.fixture(scope="session")
def hemisphere():
    return gen_hemisphere_on_plane(1.0, 3)


@pytest.fixture(scope="session")
def annulus():
    return annulus_mesh(0.5, 1.0, 32, 6)


@pytest.fixture(scope="session")
def torus():
    return gen_punctured_torus(3)


@pytest.fixture(scope="session")
def genus2():
    return genus2_mesh(1)


@pytest.fixture(scope="session")
def flat_disk():
    return disk_mesh(6)


@pytest.fixture(scope="session")
def geom():
    cache = {}

    def get(m):
        if id(m) not in cache:
            cache[id(m)] = (m, compute_geometry(m))
        return cache[id(m)][1]

    return get


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


_CRITERIA = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_CRITERIA] = []


@pytest.fixture
def record_criterion(request):
    """Print and keep one PASS/FAIL line per acceptance criterion."""

    def record(n, ok, detail):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        request.config.stash[_CRITERIA].append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
