import pytest

from tesrefrig.sim_runner import PlantConfig
from tesrefrig.thermo import load_fluid

_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def fluid():
    return load_fluid()


@pytest.fixture(scope="session")
def plant(fluid):
    return PlantConfig.default(fluid)


@pytest.fixture
def report(request):
    """``report(n, ok, detail)``: record one acceptance line, printed in the summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def _report(n, ok, detail):
        lines.append((n, f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"))
        assert ok, detail
    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
