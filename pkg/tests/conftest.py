import time

import numpy as np
import pytest

from stochfet.mdn import NetworkConfig
from stochfet.oracle import OracleConfig, generate_synthetic_dataset
from stochfet.train import TrainConfig, train
from stochfet.embedding import fit_gaussian

SMALL_ORACLE = OracleConfig(device_count=8, n_voltages=25, cycles=6, seed=3)
SMALL_NET = NetworkConfig(hidden_sizes=(16, 16), seed=3)
SMALL_TRAIN = TrainConfig(epochs=8, batch_size=64, learning_rate=5e-3, seed=3)


@pytest.fixture(scope="session")
def small_data():
    data, truth = generate_synthetic_dataset(SMALL_ORACLE)
    return data, truth


@pytest.fixture(scope="session")
def small_model(small_data):
    model = train(small_data[0], SMALL_NET, SMALL_TRAIN)
    model.embedding_gaussian = fit_gaussian(model.embeddings)
    return model


DEFAULT_RUN_SECONDS = [float("nan")]


@pytest.fixture(scope="session")
def default_run():
    """Default oracle, default network and training: the end-to-end benchmark run."""
    t0 = time.perf_counter()
    data, truth = generate_synthetic_dataset(OracleConfig())
    model = train(data, NetworkConfig(), TrainConfig())
    DEFAULT_RUN_SECONDS[0] = time.perf_counter() - t0
    model.embedding_gaussian = fit_gaussian(model.embeddings)
    return data, truth, model


def random_mixture(rng, k=None, admissible=True):
    """Random (alpha, mu, sigma); admissible ones keep a healthy share of mass above zero."""
    k = k or int(rng.integers(1, 5))
    alpha = rng.dirichlet(np.ones(k))
    sigma = rng.uniform(0.05, 2.0, k)
    if admissible:
        mu = sigma * rng.uniform(-2.5, 4.0, k)
    else:
        mu = rng.normal(0.0, 2.0, k)
    return alpha, mu, sigma


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
