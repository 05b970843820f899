"""End-to-end experiment driver.

One experiment = one scenario run under both paradigms from the same
definition, followed by the statistical comparison and an extreme-case
census.  Results are deterministic functions of (scenario, base seed):
rerunning reproduces every number except the wall-clock field.

`sweep` runs a batch of scenarios.  Each scenario's replication seeds
are derived from the base seed and the scenario *name*, so reordering
or subsetting the batch never changes any individual result.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .abm import Ensemble, run_ensemble
from .core import SimulationError, Trajectory, derive_seed
from .models import ModelSpec, ScenarioConfig, build_model, initial_state
from .ode import integrate_fixed
from .stats import (
    CensusEntry,
    ComparisonReport,
    compare_ensemble,
    extreme_case_census,
    species_extinct_by,
)


@dataclass(eq=False)
class ExperimentResult:
    """Everything one experiment produced.

    `wall_clock_s` is informational only; two runs with the same inputs
    agree on every other field."""

    scenario: ScenarioConfig
    model: ModelSpec
    base_seed: int
    alpha: float
    ode: Trajectory
    ensemble: Ensemble
    report: ComparisonReport
    census: dict[str, CensusEntry]
    wall_clock_s: float


@dataclass(frozen=True)
class ExperimentFailure:
    """A sweep entry that raised instead of completing."""

    scenario_name: str
    error: str


def default_census(scenario: ScenarioConfig) -> dict[str, Callable]:
    """Extinction-by-horizon predicates, one per species of the model."""
    model = build_model(scenario)
    day = scenario.horizon
    return {
        f"{name}_extinct_by_{day:g}": species_extinct_by(name, day)
        for name in model.species
    }


def run_experiment(
    config: ScenarioConfig,
    base_seed: int,
    alpha: float = 0.05,
    census_predicates: Mapping[str, Callable] | None = None,
    n_reps: int | None = None,
    pairing: str = "mean",
    model: ModelSpec | None = None,
) -> ExperimentResult:
    """Run one scenario under both paradigms and compare them.

    The ODE runs with the scenario's engine dt and sampling interval;
    the ensemble uses seeds base_seed .. base_seed + n_reps - 1.  Pass
    `model` to reuse an already-built spec (inline models arrive this
    way); otherwise the scenario is built and drift-checked here."""
    start = time.perf_counter()
    if model is None:
        model = build_model(config)
    init = initial_state(model, config.init)
    reps = config.n_reps if n_reps is None else n_reps
    ode = integrate_fixed(
        model.rhs,
        init,
        config.horizon,
        dt=config.engine.dt,
        sample_every=config.engine.sample_every,
        species=model.species,
    )
    ensemble = run_ensemble(
        model, init, config.engine, config.horizon, reps, base_seed
    )
    report = compare_ensemble(ode, ensemble, alpha, pairing=pairing)
    if census_predicates is None:
        census_predicates = {
            f"{name}_extinct_by_{config.horizon:g}": species_extinct_by(
                name, config.horizon
            )
            for name in model.species
        }
    census = extreme_case_census(ensemble, census_predicates)
    return ExperimentResult(
        scenario=config,
        model=model,
        base_seed=int(base_seed),
        alpha=alpha,
        ode=ode,
        ensemble=ensemble,
        report=report,
        census=census,
        wall_clock_s=time.perf_counter() - start,
    )


def sweep(
    configs: Sequence[ScenarioConfig],
    base_seed: int,
    alpha: float = 0.05,
) -> list[ExperimentResult | ExperimentFailure]:
    """Run several scenarios, isolating failures.

    Per-scenario seeds come from `derive_seed(base_seed, name)`; a
    scenario's results depend only on the base seed and its own name,
    never on its position in `configs`."""
    out: list[ExperimentResult | ExperimentFailure] = []
    for config in configs:
        try:
            out.append(
                run_experiment(config, derive_seed(base_seed, config.name), alpha)
            )
        except (SimulationError, ValueError, TypeError, KeyError) as exc:
            out.append(ExperimentFailure(config.name, f"{type(exc).__name__}: {exc}"))
    return out
