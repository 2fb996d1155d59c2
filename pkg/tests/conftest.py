import numpy as np
import pytest

from bilinear_ddc import DesignConfig, design_data_based, design_model_based, example_system, run_experiment
from bilinear_ddc.system import EXAMPLE_DELTA


@pytest.fixture(scope="session")
def plant():
    return example_system()


@pytest.fixture(scope="session")
def record(plant):
    return run_experiment(plant, T=10, seed=1)


@pytest.fixture(scope="session")
def db_design(record):
    res = design_data_based(record, DesignConfig(EXAMPLE_DELTA, 0.8))
    assert res.ok, res.message
    return res


@pytest.fixture(scope="session")
def mb_design(plant):
    res = design_model_based(plant, 0.8)
    assert res.ok, res.message
    return res


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
