import numpy as np
import pytest

from gradiv.fem.space import MixedSpace
from gradiv.mesh import generate_unit_square


def pytest_addoption(parser):
    parser.addoption("--run-nightly", action="store_true", default=False,
                     help="run the long benchmark tests marked nightly")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-nightly"):
        return
    skip = pytest.mark.skip(reason="nightly benchmark; pass --run-nightly to run")
    for item in items:
        if "nightly" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def square4():
    return generate_unit_square(4)


@pytest.fixture(scope="session", params=["mini", "th"])
def space4(request, square4):
    return MixedSpace(square4, request.param)


@pytest.fixture(scope="session", params=["mini", "th"])
def space8(request):
    return MixedSpace(generate_unit_square(8), request.param)


def random_interior(space, rng):
    """Random velocity vector vanishing on the Dirichlet dofs."""
    u = rng.standard_normal(space.n_velocity)
    u[space.dirichlet_velocity_dofs] = 0.0
    return u


# -- acceptance summary --------------------------------------------------------------

ACCEPTANCE_CRITERIA = 10
_acceptance: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def acceptance():
    """record(n, ok, detail): store the outcome of acceptance criterion n for the summary."""
    def record(n: int, ok: bool, detail: str) -> bool:
        _acceptance[n] = (bool(ok), detail)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, ACCEPTANCE_CRITERIA + 1):
        if n in _acceptance:
            ok, detail = _acceptance[n]
            terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d}: NOT RUN  (skipped or deselected; "
                                        f"nightly criteria need --run-nightly)")
