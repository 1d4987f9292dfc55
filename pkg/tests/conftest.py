import numpy as np
import pytest

from recirc.mesh import PumpLayout, PumpPair, Span, build_dofmap, build_rect_mesh


@pytest.fixture(scope="session")
def unit_square():
    mesh = build_rect_mesh(1.0, 1.0, 0.25, PumpLayout())
    return mesh, build_dofmap(mesh)


@pytest.fixture(scope="session")
def coarse_square():
    mesh = build_rect_mesh(1.0, 1.0, 0.5, PumpLayout())
    return mesh, build_dofmap(mesh)


@pytest.fixture(scope="session")
def one_pump_box():
    """4 x 2 box, one pair: collector on the right wall, injector on the bottom."""
    layout = PumpLayout((PumpPair(Span("right", 1.0, 1.5), Span("bottom", 1.0, 1.5)),))
    mesh = build_rect_mesh(4.0, 2.0, 0.25, layout)
    return mesh, build_dofmap(mesh)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
