import pytest

from gn_cff.model import fiber_from_engineering, spectrum_from_engineering


@pytest.fixture
def ref_fiber():
    """0.2 dB/km, -21 ps^2/km, 1.2 /(W km)."""
    return fiber_from_engineering(0.2, -21.0, 1.2)


@pytest.fixture
def ref_spectrum():
    """5 THz comb at 1 W/THz."""
    return spectrum_from_engineering(5.0, 1.0)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running oracle sweeps")


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one verdict line per acceptance criterion for the terminal summary."""
    return request.config.stash.setdefault(ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
