import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from core.utils.utils import LossWeights, TrainConfig, model_parameters  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: multi-minute learning and latency runs, need --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def toy_config():
    return model_parameters("toy")


@pytest.fixture
def toy_train():
    return TrainConfig(batch_size=2, max_steps=4, warmup_ratio=0.25, seed=3)


@pytest.fixture
def toy_loss():
    return LossWeights(activation_step=0, ramp_steps=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def finite_difference(f, x, h=1e-5):
    """Central differences of the scalar f() with respect to every entry of the array x, in place."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        up = f()
        x[i] = old - h
        down = f()
        x[i] = old
        grad[i] = (up - down) / (2 * h)
    return grad


@pytest.fixture
def numeric_grad():
    return finite_difference


def spot_check_gradients(loss, params, rng, per_param=4, tol=1e-4, h=1e-5):
    """Compare backward() of the scalar loss() against central differences on a few entries of every parameter."""
    from core.tensor import tensor as T

    for p in params.values():
        p.zero_grad()
    loss().backward()
    for name, p in params.items():
        flat = p.value.reshape(-1)
        analytic = np.zeros(p.size) if p.grad is None else p.grad.reshape(-1)
        for i in rng.choice(flat.size, size=min(per_param, flat.size), replace=False):
            old = flat[i]
            flat[i] = old + h
            with T.no_grad():
                up = float(loss().value)
            flat[i] = old - h
            with T.no_grad():
                down = float(loss().value)
            flat[i] = old
            numeric = (up - down) / (2 * h)
            assert abs(analytic[i] - numeric) <= tol * max(1.0, abs(numeric)), f"{name}[{i}]"


@pytest.fixture
def spot_check():
    return spot_check_gradients
