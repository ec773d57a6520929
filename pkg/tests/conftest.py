import numpy as np
import pytest

from cylfold.skewmap import build_default, make_map


@pytest.fixture(scope="session")
def params():
    return build_default()


@pytest.fixture(scope="session")
def d0(params):
    return make_map(params)


@pytest.fixture(scope="session")
def d0_report(d0):
    from cylfold.verifier import certify_all
    return certify_all(d0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mods = [m for name, m in list(sys.modules.items()) if name.rsplit(".", 1)[-1] == "test_acceptance"]
    results = getattr(mods[0], "RESULTS", {}) if mods else {}
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
