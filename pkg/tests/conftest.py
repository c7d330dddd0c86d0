import numpy as np
import pytest

from chanaug.simroom import SceneConfig, simulate_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


@pytest.fixture(scope="session")
def small_scene():
    return SceneConfig(n_mics=16, duration_s=(1.0, 1.2), max_order=4, rir_length=2048)


@pytest.fixture(scope="session")
def small_bundles(small_scene):
    return simulate_dataset(small_scene, 3, seed=5)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for num in sorted(results):
            terminalreporter.write_line(results[num])
