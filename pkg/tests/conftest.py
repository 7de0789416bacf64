import numpy as np
import pytest

from mwgp.model import ModelConfig, flatten_params, init_model, unflatten_params


def random_state(rng, I=3, J=3, m=2, r=2, spread=0.5, seed=0):
    """Initialized model with every parameter jittered away from its init value."""
    state = init_model(ModelConfig(I, J, r, m, seed=seed))
    theta, layout = flatten_params(state)
    theta = theta + rng.normal(0.0, spread, theta.size)
    # spread the latents so kernel values are neither ~0 nor ~1
    for name in ("A", "B"):
        theta[layout.slices[name]] = rng.normal(0.0, 0.7, layout.slices[name].stop - layout.slices[name].start)
    return unflatten_params(theta, state)


def full_grid(I, J, rng, scale=1.0):
    users, items = np.meshgrid(np.arange(I), np.arange(J), indexing="ij")
    users, items = users.ravel(), items.ravel()
    return users, items, scale * rng.normal(size=users.size)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.RESULTS:
        terminalreporter.write_line(line)
