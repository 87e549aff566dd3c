import sys

import numpy as np
import pytest

from sysid.simulate import euler_maruyama, make_builtin

DESK_STEPS = 200_000


@pytest.fixture(scope="session")
def desk_trajectory():
    """Double-well trajectory at desk scale, cached per seed."""
    cache = {}

    def get(seed=1, model="double_well", steps=DESK_STEPS):
        key = (seed, model, steps)
        if key not in cache:
            cache[key] = euler_maruyama(make_builtin(model), [1.0, 0.0], 1e-3, steps, seed)
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
