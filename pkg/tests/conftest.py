import os

import numpy as np
import pytest
from hypothesis import settings

from pbe_majorant import presets
from pbe_majorant.mesh import Mesh

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(int(os.environ.get("PBE_SEED", "0")))


@pytest.fixture
def two_triangles():
    """Unit square split along the diagonal (0,0)-(1,1)."""
    v = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    t = np.array([[0, 2, 1], [2, 0, 3]])
    return Mesh.from_arrays(v, t)


@pytest.fixture(scope="session")
def example1_level0():
    """Example-1 start mesh, shift and its solved problem."""
    from pbe_majorant.amr import solve_level

    pr = presets.get_preset("example1_2d")
    shift = pr.shift()
    mesh = pr.initial_mesh(shift)
    problem, u, newton, y, maj, div_err, _ = solve_level(pr.spec, mesh, shift)
    return dict(preset=pr, shift=shift, mesh=mesh, problem=problem, u=u, newton=newton, y=y, maj=maj,
                div_err=div_err)


CRITERIA = {}


def record(number: int, title: str, passed: bool, detail: str) -> None:
    """Store the verdict of an acceptance criterion for the terminal summary."""
    CRITERIA[number] = f"{'PASS' if passed else 'FAIL'}  criterion {number:>2d}: {title}  [{detail}]"


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[number])
