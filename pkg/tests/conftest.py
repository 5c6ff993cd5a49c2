import numpy as np
import pytest

from cfexplain.data import Dataset, FeatureSpec, build_specs, gen_synthetic
from cfexplain.models import FunctionPredictor, train_logreg


@pytest.fixture(scope="session")
def synth():
    return gen_synthetic(2000, 20, seed=7)


@pytest.fixture(scope="session")
def synth_logreg(synth):
    return train_logreg(synth)


@pytest.fixture(scope="session")
def small():
    """Four-feature problem that keeps generator tests fast."""
    return gen_synthetic(400, 4, seed=3, n_informative=2)


@pytest.fixture(scope="session")
def small_logreg(small):
    return train_logreg(small)


def sigmoid_1d():
    """score(x) = sigma(x) on a single feature in [-5, 5]."""
    rng = np.random.default_rng(0)
    x = rng.uniform(-5, 5, size=(200, 1))
    y = (x[:, 0] > 0).astype(int)
    spec = FeatureSpec("x", -5.0, 5.0, True, mad=1.0)
    data = Dataset(x, y, (spec,))
    model = FunctionPredictor(lambda X: 1.0 / (1.0 + np.exp(-X[:, 0])))
    return data, model


def toy_dataset(records, targets, names=None, metadata=None):
    records = np.asarray(records, dtype=float)
    return Dataset(records, np.asarray(targets), build_specs(records, names, metadata))


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(module.RESULTS, key=lambda s: int(s.split("] ")[1].split(".")[0])):
        terminalreporter.write_line(line)
