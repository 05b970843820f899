"""Model builders, the drift identity, and the scenario registry."""

import numpy as np
import pytest

from dualsim.abm import (
    BACKEND_PER_AGENT,
    BACKEND_TAU_LEAP,
    RemoveSelf,
    TransitionSpec,
)
from dualsim.core import (
    EFFECTOR,
    IL2,
    TGFBETA,
    TUMOUR,
    Case0Params,
    Case1Params,
    Case2Params,
    ZeroDenominator,
)
from dualsim.models import (
    CASE1_SCENARIOS,
    DriftMismatch,
    ModelSpec,
    ScenarioConfig,
    UnknownScenario,
    build_case0,
    build_case1,
    build_case2,
    build_case3,
    build_model,
    check_drift_equivalence,
    find_scenario,
    initial_state,
    scenario_registry,
)
from dualsim.rates import const, evaluate


def test_registry_layout():
    reg = scenario_registry()
    assert [c.name for c in reg] == [
        "case0", "case1-s1", "case1-s2", "case1-s3", "case1-s4", "case2", "case3",
    ]
    assert all(c.n_reps == 50 for c in reg)
    assert all(c.description for c in reg)
    horizons = {c.name: c.horizon for c in reg}
    assert horizons["case0"] == 100.0
    assert horizons["case1-s3"] == 100.0
    assert horizons["case2"] == 600.0
    assert horizons["case3"] == 600.0


def test_registry_backends():
    reg = {c.name: c for c in scenario_registry()}
    for name in ("case0", "case1-s1", "case1-s2", "case1-s3", "case1-s4"):
        assert reg[name].engine.backend == BACKEND_PER_AGENT
    for name in ("case2", "case3"):
        assert reg[name].engine.backend == BACKEND_TAU_LEAP
        assert reg[name].engine.dt == 0.002


def test_registry_initial_counts():
    reg = {c.name: c for c in scenario_registry()}
    assert reg["case0"].init == {TUMOUR: 10}
    assert reg["case1-s1"].init == {TUMOUR: 100, EFFECTOR: 5}
    assert reg["case2"].init == {TUMOUR: 10_000, EFFECTOR: 1_000, IL2: 1_000}
    assert reg["case3"].init == {
        TUMOUR: 10_000, EFFECTOR: 1_000, IL2: 1_000, TGFBETA: 0,
    }


def test_find_scenario():
    assert find_scenario("case2").case == 2
    with pytest.raises(UnknownScenario) as exc:
        find_scenario("case9")
    assert "case1-s4" in str(exc.value)  # the error lists what exists


def test_stock_parameters_spot_values():
    assert CASE1_SCENARIOS[1].s == 0.318
    assert CASE1_SCENARIOS[1].d == 0.1908
    assert CASE1_SCENARIOS[2].b == 0.004
    assert CASE1_SCENARIOS[2].d == 2.0
    assert CASE1_SCENARIOS[3].s == 0.1181
    assert CASE1_SCENARIOS[4].s == 0.0
    assert all(p.a == 1.636 and p.g == 20.19 for p in CASE1_SCENARIOS.values())
    c2 = build_case2().params
    assert (c2.b, c2.mu3, c2.p1, c2.g1) == (1e-9, 10.0, 0.1245, 2e7)
    c3 = build_case3().params
    assert (c3.c, c3.q2, c3.theta, c3.p4, c3.K) == (0.035, 0.1121, 1e6, 2.84, 1e9)


def test_all_models_satisfy_drift_identity():
    for cfg in scenario_registry():
        model = build_model(cfg)
        worst = check_drift_equivalence(model)
        assert worst < 1e-12, f"{model.name}: {worst}"


def test_drift_mismatch_detected():
    broken = ModelSpec(
        name="broken",
        species=("X",),
        params=None,
        rhs=lambda t, y: np.array([-0.5 * y[0]]),
        transitions=(TransitionSpec("death", "X", const(0.4), RemoveSelf()),),
    )
    with pytest.raises(DriftMismatch):
        check_drift_equivalence(broken)


def test_case0_balanced_params_are_inert():
    # a == b and alpha == beta make the net rate identically zero.
    model = build_case0(Case0Params(a=0.2, alpha=1.1, b=0.2, beta=1.1))
    rate = model.transitions[0].rate
    for t_count in (0.5, 1.0, 7.0, 200.0):
        assert evaluate(rate, {TUMOUR: t_count}, model.params) == pytest.approx(0.0, abs=1e-15)
    assert model.rhs(0.0, np.array([50.0]))[0] == pytest.approx(0.0, abs=1e-12)


def test_case1_scenario_names_and_custom_params():
    assert build_case1(3).name == "case1-s3"
    custom = Case1Params(a=1.0, b=0.01, n=1.0, p=1.0, g=10.0, m=0.001, d=0.5, s=0.1)
    model = build_case1(params=custom)
    assert model.name == "case1"
    assert model.params is custom
    with pytest.raises(UnknownScenario):
        build_case1(9)


def test_case1_scenario4_influx_is_inert():
    model = build_case1(4)
    (influx,) = model.influxes
    assert evaluate(influx.rate, {}, model.params) == 0.0


def test_tgf_production_aggregates_to_switch():
    # Per-cell rate p4*T/(theta^2+T^2) times T tumour cells must equal
    # the sigmoidal source p4*T^2/(theta^2+T^2).
    model = build_case3()
    p = model.params
    (tgf,) = [t for t in model.transitions if t.name == "tgf_production"]
    assert tgf.source == TUMOUR
    for T in (1e3, 1e4, 1e6, 1e8):
        per_cell = evaluate(tgf.rate, {TUMOUR: T, TGFBETA: 0.0, IL2: 0.0, EFFECTOR: 0.0}, p)
        assert per_cell * T == pytest.approx(p.p4 * T**2 / (p.theta**2 + T**2), rel=1e-12)
    # At the census-relevant state the aggregate source is tiny.
    agg = evaluate(tgf.rate, {TUMOUR: 1e4}, p) * 1e4
    assert agg == pytest.approx(2.84e-4, rel=1e-3)


def test_species_orders():
    assert build_case0(Case0Params(0.3, 1.0, 0.1, 1.2)).species == (TUMOUR,)
    assert build_case1(1).species == (TUMOUR, EFFECTOR)
    assert build_case2().species == (TUMOUR, EFFECTOR, IL2)
    assert build_case3().species == (TUMOUR, EFFECTOR, IL2, TGFBETA)


def test_notes_describe_channel_choices():
    assert build_case1(1).notes
    assert len(build_case3().notes) == 2


def test_initial_state_alignment():
    model = build_case2()
    state = initial_state(model, {IL2: 7, TUMOUR: 3})
    np.testing.assert_array_equal(state.values, [3.0, 0.0, 7.0])
    assert state.time == 0.0
    with pytest.raises(KeyError):
        initial_state(model, {"Phantom": 1})


def test_build_model_dispatch():
    for cfg in scenario_registry():
        model = build_model(cfg)
        assert set(cfg.init) <= set(model.species)
    bad = ScenarioConfig(
        name="x", description="d", case=7, scenario=None, params=None,
        init={}, horizon=1.0,
    )
    with pytest.raises(UnknownScenario):
        build_model(bad)


def test_scenario_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(
            name="x", description="d", case=0, scenario=None,
            params=None, init={}, horizon=0.0,
        )
    with pytest.raises(ValueError):
        ScenarioConfig(
            name="x", description="d", case=0, scenario=None,
            params=None, init={}, horizon=1.0, n_reps=0,
        )
    with pytest.raises(ValueError):
        ScenarioConfig(
            name="x", description="d", case=0, scenario=None,
            params=None, init={TUMOUR: -1}, horizon=1.0,
        )


def test_invalid_params_rejected_at_build():
    with pytest.raises(ZeroDenominator):
        build_case2(
            Case2Params(
                a=0.18, b=1e-9, c=0.05, aa=1.0, g1=0.0, g2=1e5, g3=1e3,
                mu2=0.03, mu3=10.0, p1=0.1245, p2=5.0, s1=0.0, s2=0.0,
            )
        )
