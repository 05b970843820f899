"""Model definitions shared by both simulation paradigms.

A `ModelSpec` carries one model twice over: the ODE right-hand side and
the stochastic channel table.  The two are tied together by a drift
identity, checked at construction: summing source_count * rate * effect
over every channel (plus influxes) must reproduce the ODE derivatives
exactly, at every state.  A model that fails the check cannot be built.

Four models ship with the package:

* case 0: single-species power-law growth/decay warm-up.
* case 1: tumour vs effector cells, four parameter scenarios covering
  tumour clearance, dormant coexistence, unstable escape, and growth to
  carrying capacity (Kuznetsov-style kinetics).
* case 2: tumour / effector / IL-2 with saturating kill and cytokine
  feedback (Kirschner-Panetta kinetics).
* case 3: case 2 extended with TGF-beta immunosuppression and
  tumour-growth stimulation (Arciero kinetics).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Mapping

import numpy as np

from .abm import (
    BACKEND_PER_AGENT,
    BACKEND_TAU_LEAP,
    EngineConfig,
    InfluxSpec,
    RemoveOther,
    RemoveSelf,
    SignedBranch,
    Spawn,
    TransitionSpec,
    aggregate_drift,
)
from .core import (
    EFFECTOR,
    IL2,
    TGFBETA,
    TUMOUR,
    Case0Params,
    Case1Params,
    Case2Params,
    Case3Params,
    PopulationState,
    SimulationError,
    validate_params,
)
from .ode import rhs_case0, rhs_case1, rhs_case2, rhs_case3
from .rates import Const, count, param, saturating


class DriftMismatch(SimulationError):
    """The stochastic channel table does not aggregate to the ODE
    derivatives; the model definition is inconsistent."""


class UnknownScenario(SimulationError):
    """No scenario registered under the requested name or number."""


@dataclass(eq=False)
class ModelSpec:
    """One model, defined once, executable under either paradigm.

    `rhs(t, y)` has the parameters already bound.  `transitions` and
    `influxes` are the stochastic channel table, in declared order.
    `notes` records interpretation choices made when casting rate terms
    into per-agent channels.
    """

    name: str
    species: tuple[str, ...]
    params: object
    rhs: Callable[[float, np.ndarray], np.ndarray]
    transitions: tuple[TransitionSpec, ...]
    influxes: tuple[InfluxSpec, ...] = ()
    notes: tuple[str, ...] = ()


def check_drift_equivalence(
    model: ModelSpec,
    n_states: int = 100,
    rel_tol: float = 1e-9,
    seed: int = 0x5EED_D21F,
) -> float:
    """Compare aggregated channel drift with the ODE right-hand side at
    random positive states.  Returns the worst relative discrepancy
    (floored denominator) and raises DriftMismatch above `rel_tol`.
    """
    rng = np.random.default_rng(seed)
    n = len(model.species)
    worst = 0.0
    for _ in range(n_states):
        state = 10.0 ** rng.uniform(-1.0, 4.0, size=n)
        drift = aggregate_drift(
            model.species, model.transitions, model.influxes, model.params, state
        )
        deriv = np.asarray(model.rhs(0.0, state), dtype=float)
        denom = np.maximum(1.0, np.maximum(np.abs(drift), np.abs(deriv)))
        disc = float(np.max(np.abs(drift - deriv) / denom))
        worst = max(worst, disc)
        if disc > rel_tol:
            raise DriftMismatch(
                f"model {model.name!r}: channel drift deviates from the ODE "
                f"by {disc:.3e} (relative) at state {state!r}"
            )
    return worst


def _checked(spec: ModelSpec) -> ModelSpec:
    check_drift_equivalence(spec)
    return spec


# ---------------------------------------------------------------------------
# Builders


def build_case0(params: Case0Params) -> ModelSpec:
    """Single-species power-law model: dT/dt = a*T^alpha - b*T^beta.

    The whole right-hand side becomes one signed-branch channel with
    per-agent rate a*T^(alpha-1) - b*T^(beta-1): multiplying by the T
    source agents recovers the ODE exactly.
    """
    validate_params(params)
    T = count(TUMOUR)
    net = param("a") * T ** (param("alpha") - 1) - param("b") * T ** (param("beta") - 1)
    transitions = (
        TransitionSpec("net_growth", TUMOUR, net, SignedBranch()),
    )
    return _checked(
        ModelSpec(
            name="case0",
            species=(TUMOUR,),
            params=params,
            rhs=partial(_rhs0, params),
            transitions=transitions,
            notes=(
                "net growth is a single signed channel; its per-agent rate "
                "divides each power-law term by T",
            ),
        )
    )


# rhs adapters: bind params and present the (t, y) call signature.
def _rhs0(p, t, y):
    return rhs_case0(y, p)


def _rhs1(p, t, y):
    return rhs_case1(y, p)


def _rhs2(p, t, y):
    return rhs_case2(y, p)


def _rhs3(p, t, y):
    return rhs_case3(y, p)


#: Scenario parameter sets for case 1.  All share a, g, m, n, p; the
#: scenarios differ in b, d, s and produce qualitatively different fates
#: for the tumour (clearance, dormancy, escape, uncontrolled growth).
CASE1_SCENARIOS: dict[int, Case1Params] = {
    1: Case1Params(a=1.636, b=0.002, n=1.0, p=1.131, g=20.19, m=0.00311, d=0.1908, s=0.318),
    2: Case1Params(a=1.636, b=0.004, n=1.0, p=1.131, g=20.19, m=0.00311, d=2.0, s=0.318),
    3: Case1Params(a=1.636, b=0.002, n=1.0, p=1.131, g=20.19, m=0.00311, d=0.3743, s=0.1181),
    4: Case1Params(a=1.636, b=0.002, n=1.0, p=1.131, g=20.19, m=0.00311, d=0.3743, s=0.0),
}


def build_case1(scenario: int = 1, params: Case1Params | None = None) -> ModelSpec:
    """Tumour/effector model.  `scenario` selects one of the four stock
    parameter sets; pass `params` to override them entirely."""
    if params is None:
        try:
            params = CASE1_SCENARIOS[scenario]
        except KeyError:
            raise UnknownScenario(
                f"case 1 has scenarios {sorted(CASE1_SCENARIOS)}, not {scenario!r}"
            ) from None
    validate_params(params)
    T, E = count(TUMOUR), count(EFFECTOR)
    transitions = (
        TransitionSpec(
            "tumour_net_growth", TUMOUR, param("a") * (1 - param("b") * T), SignedBranch()
        ),
        TransitionSpec("tumour_killed", TUMOUR, param("n") * E, RemoveSelf()),
        TransitionSpec(
            "effector_exhaustion", TUMOUR, param("m") * E, RemoveOther(EFFECTOR)
        ),
        TransitionSpec(
            "effector_recruitment",
            EFFECTOR,
            param("p") * saturating(T, param("g")),
            Spawn(EFFECTOR),
        ),
        TransitionSpec("effector_death", EFFECTOR, param("d"), RemoveSelf()),
    )
    influxes = (InfluxSpec("effector_influx", EFFECTOR, param("s")),)
    return _checked(
        ModelSpec(
            name=f"case1-s{scenario}" if params is CASE1_SCENARIOS.get(scenario) else "case1",
            species=(TUMOUR, EFFECTOR),
            params=params,
            rhs=partial(_rhs1, params),
            transitions=transitions,
            influxes=influxes,
            notes=(
                "effector exhaustion is carried by tumour cells at rate m*E "
                "(a message removing one random effector), so the aggregate "
                "loss is m*E*T",
            ),
        )
    )


def build_case2(params: Case2Params | None = None) -> ModelSpec:
    """Tumour / effector / IL-2 model with its stock parameter set."""
    if params is None:
        params = Case2Params(
            a=0.18,
            b=1e-9,
            c=0.05,
            aa=1.0,
            g1=2e7,
            g2=1e5,
            g3=1e3,
            mu2=0.03,
            mu3=10.0,
            p1=0.1245,
            p2=5.0,
            s1=0.0,
            s2=0.0,
        )
    validate_params(params)
    T, I = count(TUMOUR), count(IL2)
    transitions = (
        TransitionSpec("effector_recruitment", TUMOUR, param("c"), Spawn(EFFECTOR)),
        TransitionSpec(
            "il2_production",
            EFFECTOR,
            param("p2") * saturating(T, param("g3")),
            Spawn(IL2),
        ),
        TransitionSpec("il2_decay", IL2, param("mu3"), RemoveSelf()),
        TransitionSpec(
            "tumour_net_growth", TUMOUR, param("a") * (1 - param("b") * T), SignedBranch()
        ),
        TransitionSpec(
            "tumour_killed",
            EFFECTOR,
            param("aa") * saturating(T, param("g2")),
            RemoveOther(TUMOUR),
        ),
        TransitionSpec("effector_death", EFFECTOR, param("mu2"), RemoveSelf()),
        TransitionSpec(
            "effector_proliferation",
            EFFECTOR,
            param("p1") * saturating(I, param("g1")),
            Spawn(EFFECTOR),
        ),
    )
    influxes = (
        InfluxSpec("effector_therapy", EFFECTOR, param("s1")),
        InfluxSpec("il2_therapy", IL2, param("s2")),
    )
    return _checked(
        ModelSpec(
            name="case2",
            species=(TUMOUR, EFFECTOR, IL2),
            params=params,
            rhs=partial(_rhs2, params),
            transitions=transitions,
            influxes=influxes,
            notes=(
                "tumour kill is a message sent by effectors at the saturating "
                "rate aa*T/(g2+T), removing one random tumour cell each",
            ),
        )
    )


def build_case3(params: Case3Params | None = None) -> ModelSpec:
    """Four-species model with TGF-beta.  The stock parameter set keeps
    the tumour below its carrying capacity K over the usual horizons."""
    if params is None:
        params = Case3Params(
            a=0.18,
            K=1e9,
            aa=1.0,
            c=0.035,
            gamma=10.0,
            alpha=0.001,
            p1=0.1245,
            q1=10.0,
            q2=0.1121,
            g1=2e7,
            g2=1e5,
            g3=2e7,
            g4=1e3,
            p2=0.27,
            p3=5.0,
            p4=2.84,
            theta=1e6,
            mu1=0.03,
            mu2=10.0,
            mu3=10.0,
        )
    validate_params(params)
    T, I, S = count(TUMOUR), count(IL2), count(TGFBETA)
    transitions = (
        TransitionSpec(
            "effector_net_proliferation",
            EFFECTOR,
            (param("p1") - param("q1") * saturating(S, param("q2")))
            * saturating(I, param("g1")),
            SignedBranch(),
        ),
        TransitionSpec("effector_death", EFFECTOR, param("mu1"), RemoveSelf()),
        TransitionSpec(
            "tumour_killed",
            EFFECTOR,
            param("aa") * saturating(T, param("g2")),
            RemoveOther(TUMOUR),
        ),
        TransitionSpec(
            "il2_production",
            EFFECTOR,
            param("p3")
            * saturating(T, param("g4"))
            / (1 + param("alpha") * S),
            Spawn(IL2),
        ),
        TransitionSpec(
            "tumour_net_growth",
            TUMOUR,
            param("a") * (1 - T / param("K")),
            SignedBranch(),
        ),
        TransitionSpec(
            "tgf_production",
            TUMOUR,
            param("p4") * T / (param("theta") ** 2 + T**2),
            Spawn(TGFBETA),
        ),
        TransitionSpec(
            "tumour_growth_stimulation",
            TUMOUR,
            param("p2") * saturating(S, param("g3")),
            Spawn(TUMOUR),
        ),
        TransitionSpec(
            "effector_recruitment",
            TUMOUR,
            param("c") / (1 + param("gamma") * S),
            Spawn(EFFECTOR),
        ),
        TransitionSpec("il2_decay", IL2, param("mu2"), RemoveSelf()),
        TransitionSpec("tgf_decay", TGFBETA, param("mu3"), RemoveSelf()),
    )
    return _checked(
        ModelSpec(
            name="case3",
            species=(TUMOUR, EFFECTOR, IL2, TGFBETA),
            params=params,
            rhs=partial(_rhs3, params),
            transitions=transitions,
            notes=(
                "TGF-beta production attaches to tumour cells at rate "
                "p4*T/(theta^2+T^2), aggregating to the switch-like "
                "p4*T^2/(theta^2+T^2) source",
                "growth stimulation by TGF-beta spawns extra tumour cells at "
                "p2*S/(g3+S) per tumour cell, matching the p2*S*T/(g3+S) term",
            ),
        )
    )


# ---------------------------------------------------------------------------
# Scenario registry


@dataclass(frozen=True)
class ScenarioConfig:
    """A ready-to-run setup: which model, which parameters, initial
    counts, horizon, engine settings, and replication count."""

    name: str
    description: str
    case: int
    scenario: int | None
    params: object
    init: Mapping[str, int]
    horizon: float
    engine: EngineConfig = field(default_factory=EngineConfig)
    n_reps: int = 50

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be > 0")
        if self.n_reps < 1:
            raise ValueError("n_reps must be >= 1")
        for name, value in self.init.items():
            if value < 0:
                raise ValueError(f"initial count for {name} must be >= 0")


def build_model(config: ScenarioConfig) -> ModelSpec:
    """Construct (and drift-check) the model a scenario refers to."""
    if config.case == 0:
        return build_case0(config.params)
    if config.case == 1:
        return build_case1(config.scenario or 1, config.params)
    if config.case == 2:
        return build_case2(config.params)
    if config.case == 3:
        return build_case3(config.params)
    raise UnknownScenario(f"no case {config.case!r}")


def initial_state(model: ModelSpec, init: Mapping[str, int]) -> PopulationState:
    """Align a name->count mapping to the model's species order."""
    unknown = set(init) - set(model.species)
    if unknown:
        raise KeyError(f"unknown species in initial counts: {sorted(unknown)}")
    values = np.array([float(init.get(name, 0)) for name in model.species])
    return PopulationState(0.0, values)


_CASE1_DESCRIPTIONS = {
    1: "tumour cleared by immune response",
    2: "tumour dormancy at a small equilibrium",
    3: "weakened immunity, tumour escape",
    4: "no effector influx, growth to carrying capacity",
}


def scenario_registry() -> tuple[ScenarioConfig, ...]:
    """All stock scenarios, in presentation order.

    Case 0/1 default to the per-agent backend (populations stay small);
    cases 2 and 3 default to tau-leaping (populations reach 1e4+).
    """
    per_agent = EngineConfig(backend=BACKEND_PER_AGENT)
    # Cytokine turnover in cases 2 and 3 runs at 10/day.  The removal
    # draw Binomial(n, 1-exp(-r*h)) undershoots the drift r*n*h by about
    # r*h/2, so h = 0.01 would park IL-2 five percent above the ODE
    # curve.  h = 0.002 keeps that bias near one percent, inside the
    # replication noise of a 50-run mean.
    tau = EngineConfig(backend=BACKEND_TAU_LEAP, dt=0.002)
    entries = [
        ScenarioConfig(
            name="case0",
            description="power-law warm-up, saturates near 243 cells",
            case=0,
            scenario=None,
            params=Case0Params(a=0.3, alpha=1.0, b=0.1, beta=1.2),
            init={TUMOUR: 10},
            horizon=100.0,
            engine=per_agent,
        )
    ]
    for k in sorted(CASE1_SCENARIOS):
        entries.append(
            ScenarioConfig(
                name=f"case1-s{k}",
                description=_CASE1_DESCRIPTIONS[k],
                case=1,
                scenario=k,
                params=CASE1_SCENARIOS[k],
                init={TUMOUR: 100, EFFECTOR: 5},
                horizon=100.0,
                engine=per_agent,
            )
        )
    entries.append(
        ScenarioConfig(
            name="case2",
            description="tumour/effector/IL-2 damped oscillations",
            case=2,
            scenario=None,
            params=None,
            init={TUMOUR: 10_000, EFFECTOR: 1_000, IL2: 1_000},
            horizon=600.0,
            engine=tau,
        )
    )
    entries.append(
        ScenarioConfig(
            name="case3",
            description="adds TGF-beta suppression, rare cytokine counts",
            case=3,
            scenario=None,
            params=None,
            init={TUMOUR: 10_000, EFFECTOR: 1_000, IL2: 1_000, TGFBETA: 0},
            horizon=600.0,
            engine=tau,
        )
    )
    return tuple(entries)


def find_scenario(name: str) -> ScenarioConfig:
    for entry in scenario_registry():
        if entry.name == name:
            return entry
    known = ", ".join(entry.name for entry in scenario_registry())
    raise UnknownScenario(f"no scenario {name!r} (known: {known})")
