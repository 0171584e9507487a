import numpy as np
import pytest

from cqedtrap.config import data_path, load_psd
from cqedtrap.physics import CavityQedParams, FortConfig


@pytest.fixture(scope="session")
def params():
    return CavityQedParams()


@pytest.fixture(scope="session")
def psd():
    return load_psd(data_path("fort_noise_psd.csv"))


@pytest.fixture(scope="session")
def fort45(psd):
    return FortConfig(stark_ground=-45e6, stark_excited=45e6, noise_psd=psd)


@pytest.fixture(scope="session")
def fort50(psd):
    return FortConfig(stark_ground=-50e6, stark_excited=50e6, noise_psd=psd)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion; printed again in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(number: int, title: str, ok: bool, detail: str):
        line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
