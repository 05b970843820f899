"""Shared fixtures: prebuilt models and a warmed jit kernel.

The tau-leap inner loop is numba-compiled on first use.  Warming it once
per session keeps compile time out of every runtime-budgeted test, so
those budgets measure the algorithms rather than the compiler.
"""

import numpy as np
import pytest

from dualsim import EngineConfig, SeededStream, abm, models


@pytest.fixture(scope="session", autouse=True)
def warm_kernel():
    cfg = models.find_scenario("case1-s1")
    model = models.build_model(cfg)
    init = models.initial_state(model, cfg.init)
    abm.run_replication(
        model, init, EngineConfig(backend="tau-leap"), 1.0, SeededStream(0)
    )


@pytest.fixture(scope="session")
def case1_s1():
    cfg = models.find_scenario("case1-s1")
    model = models.build_model(cfg)
    return cfg, model, models.initial_state(model, cfg.init)


@pytest.fixture(scope="session")
def case1_s2():
    cfg = models.find_scenario("case1-s2")
    model = models.build_model(cfg)
    return cfg, model, models.initial_state(model, cfg.init)


@pytest.fixture(scope="session")
def case2():
    cfg = models.find_scenario("case2")
    model = models.build_model(cfg)
    return cfg, model, models.initial_state(model, cfg.init)


@pytest.fixture(scope="session")
def case3():
    cfg = models.find_scenario("case3")
    model = models.build_model(cfg)
    return cfg, model, models.initial_state(model, cfg.init)


@pytest.fixture(scope="session")
def case3_ensemble(case3):
    """One 50-replication case-3 ensemble, shared by the tests that only
    inspect it (TGF-beta discreteness, extinction census)."""
    cfg, model, init = case3
    return abm.run_ensemble(
        model, init, cfg.engine, cfg.horizon, cfg.n_reps, base_seed=90210
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)
