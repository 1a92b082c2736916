import numpy as np
import pytest

from dersim import engine, scenarios


@pytest.fixture(scope="session")
def run_cache():
    """Session-wide cache of builtin scenario runs, keyed by (name, mca)."""
    cache = {}

    def get(name, mca_enabled=None, seed=None):
        key = (name, mca_enabled, seed)
        if key not in cache:
            cfg = scenarios.get_scenario(name, seed=seed,
                                         mca_enabled=mca_enabled)
            cache[key] = engine.run_scenario(cfg)
        return cache[key]

    return get


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the numba kernels once before any timed test."""
    cfg = scenarios.get_scenario("attack-free-47")
    cfg = cfg.with_updates(t_end=0.05)
    engine.run_scenario(cfg)
    acfg = scenarios.get_scenario("abstract-p2")
    acfg = acfg.with_updates(t_end=0.05)
    engine.abstract_consensus_mode(acfg)


def rel_err(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
