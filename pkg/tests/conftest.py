import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import ctxsense.learn.svm as svm_module
from ctxsense.config import PipelineConfig
from ctxsense.pipeline import TrainingData, train_models
from ctxsense.synth import generate_scenario, training_script

settings.register_profile("ctxsense", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ctxsense")

# Every SMO run anywhere in the suite is checked for dual feasibility.
DUAL_RUNS = []
_solve_dual = svm_module.solve_dual


def _checked_solve_dual(K, y, beta, *args, **kwargs):
    sol = _solve_dual(K, y, beta, *args, **kwargs)
    a = sol.alpha
    residual = abs(float(np.dot(a, y)))
    DUAL_RUNS.append((bool(np.all(a >= 0) and np.all(a <= beta)), residual))
    assert np.all(a >= 0) and np.all(a <= beta), "box constraint violated"
    assert residual < 1e-8, f"equality constraint residual {residual}"
    return sol


svm_module.solve_dual = _checked_solve_dual


@pytest.fixture(scope="session")
def config():
    return PipelineConfig()


@pytest.fixture(scope="session")
def training_scenario():
    return generate_scenario(training_script(), seed=101)


@pytest.fixture(scope="session")
def bundle(training_scenario, config):
    return train_models(TrainingData.from_scenarios([training_scenario], config), config)


# Acceptance outcomes, printed once at the end of the run.
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance():
    def record(number, title, ok, detail=""):
        ACCEPTANCE[number] = (title, bool(ok), detail)
        assert ok, f"{title}: {detail}"
    return record


@pytest.fixture(scope="session")
def dual_runs():
    return DUAL_RUNS


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:2d} {title}: {detail}")
    feasible = all(ok and r < 1e-8 for ok, r in DUAL_RUNS)
    terminalreporter.write_line(f"SMO runs in the whole session: {len(DUAL_RUNS)}, "
                                f"all dual-feasible: {feasible}")
