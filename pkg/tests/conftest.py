import pytest

from hidacalc.config import TruncationPolicy
from hidacalc.hermite import QuadratureSpec, build_basis
from hidacalc.rng import make_rng


@pytest.fixture
def policy():
    return TruncationPolicy(K=4, N_max=4, headroom=2)


@pytest.fixture
def rng(request):
    return make_rng(20261014, request.node.name)


@pytest.fixture(scope="session")
def basis4():
    return build_basis(4)


@pytest.fixture(scope="session")
def fine_basis():
    return build_basis(4, QuadratureSpec("uniform", nodes=8001, half_width=12.0))


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance") or __import__("sys").modules.get("tests.test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
