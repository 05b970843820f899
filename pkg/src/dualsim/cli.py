"""Command-line front end.

Subcommands: ``run-ode`` (deterministic trajectory), ``run-abm``
(stochastic ensemble), ``compare`` (both paradigms plus the rank-sum
report), ``census`` (extreme-case frequencies), ``list-scenarios``.
Each takes either ``--scenario <name>`` or ``--config <file.json>``;
flags override config values, and the seed falls back to the
``DUALSIM_SEED`` environment variable, then 0.

CSV outputs land in ``--out`` (default: the config's ``outputs`` entry,
else the working directory); a human-readable summary goes to stdout.
Exit codes: 0 success, 1 usage or configuration error, 2 runtime
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from .abm import run_ensemble
from .config import ConfigError, RunPlan, parse_config, plan_from_scenario
from .core import SimulationError
from .experiments import run_experiment
from .models import (
    ScenarioConfig,
    UnknownScenario,
    initial_state,
    scenario_registry,
)
from .ode import integrate_fixed
from .output import (
    census_csv,
    comparison_svg,
    emit_csv,
    format_number,
    report_csv,
    trajectory_csv,
)
from .stats import species_extinct_by

SEED_ENV = "DUALSIM_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse's own failures to exit code 1
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dualsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="JSON run configuration")
    common.add_argument("--scenario", metavar="NAME", help="stock scenario name")
    common.add_argument("--seed", type=int, help="base random seed")
    common.add_argument("--n-reps", type=int, dest="n_reps", help="replication count")
    common.add_argument("--horizon", type=float, help="days to simulate")
    common.add_argument("--dt", type=float, help="engine step size (days)")
    common.add_argument(
        "--backend", choices=["tau-leap", "per-agent"], help="stochastic backend"
    )
    common.add_argument(
        "--rate-policy",
        choices=["live", "frozen-at-birth"],
        dest="rate_policy",
        help="how agents track changing rates",
    )
    common.add_argument("--out", metavar="DIR", help="output directory for CSV/SVG")

    run_ode = sub.add_parser(
        "run-ode", parents=[common], help="integrate the deterministic model"
    )
    run_ode.set_defaults(func=cmd_run_ode)

    run_abm = sub.add_parser(
        "run-abm", parents=[common], help="run the stochastic ensemble"
    )
    run_abm.set_defaults(func=cmd_run_abm)

    compare = sub.add_parser(
        "compare", parents=[common], help="run both paradigms and test agreement"
    )
    compare.add_argument(
        "--alpha", type=float, default=0.05, help="significance level (default 0.05)"
    )
    compare.add_argument(
        "--plot", action="store_true", help="also write per-species SVG charts"
    )
    compare.set_defaults(func=cmd_compare)

    census = sub.add_parser(
        "census", parents=[common], help="count extreme replications"
    )
    census.add_argument(
        "--extinct-by",
        type=float,
        dest="extinct_by",
        help="day for the extinction predicates (default: horizon)",
    )
    census.set_defaults(func=cmd_census)

    listing = sub.add_parser("list-scenarios", help="print the stock scenarios")
    listing.set_defaults(func=cmd_list_scenarios)
    return parser


# ---------------------------------------------------------------------------
# Plan resolution


def _load_plan(args) -> RunPlan:
    if args.config and args.scenario:
        raise UsageError("give --config or --scenario, not both")
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        plan = parse_config(text)
    elif args.scenario:
        plan = plan_from_scenario(args.scenario)
    else:
        raise UsageError("a --config file or --scenario name is required")

    engine_fields = {}
    if args.dt is not None:
        engine_fields["dt"] = args.dt
    if args.backend is not None:
        engine_fields["backend"] = args.backend
    if args.rate_policy is not None:
        engine_fields["rate_policy"] = args.rate_policy
    if engine_fields:
        try:
            plan.engine = dataclasses.replace(plan.engine, **engine_fields)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if args.horizon is not None:
        if args.horizon <= 0:
            raise UsageError("--horizon must be > 0")
        plan.horizon = args.horizon
    if args.n_reps is not None:
        if args.n_reps < 1:
            raise UsageError("--n-reps must be >= 1")
        plan.n_reps = args.n_reps
    if args.seed is not None:
        plan.seed = args.seed
    elif plan.seed is None:
        raw = os.environ.get(SEED_ENV)
        if raw is not None:
            try:
                plan.seed = int(raw)
            except ValueError:
                raise UsageError(
                    f"{SEED_ENV} must be an integer, got {raw!r}"
                ) from None
        else:
            plan.seed = 0
    if args.out is not None:
        plan.outputs = args.out
    return plan


def _scenario_of(plan: RunPlan) -> ScenarioConfig:
    """The plan as a runnable ScenarioConfig (inline models included)."""
    base = plan.scenario
    if base is not None:
        return dataclasses.replace(
            base,
            init=dict(plan.init),
            horizon=plan.horizon,
            engine=plan.engine,
            n_reps=plan.n_reps,
        )
    return ScenarioConfig(
        name=plan.name,
        description="inline model",
        case=-1,
        scenario=None,
        params=plan.model.params,
        init=dict(plan.init),
        horizon=plan.horizon,
        engine=plan.engine,
        n_reps=plan.n_reps,
    )


def _out_dir(plan: RunPlan) -> Path:
    out = Path(plan.outputs) if plan.outputs else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str):
    path.write_text(text)
    print(f"wrote {path}")


def _final_line(traj, species) -> str:
    parts = [f"{name}={format_number(traj.column(name)[-1])}" for name in species]
    return ", ".join(parts)


def _run_experiment_for(plan: RunPlan, alpha: float = 0.05, census_predicates=None):
    return run_experiment(
        _scenario_of(plan),
        plan.seed,
        alpha,
        census_predicates=census_predicates,
        model=plan.model,
    )


# ---------------------------------------------------------------------------
# Subcommands


def cmd_run_ode(args) -> int:
    plan = _load_plan(args)
    traj = integrate_fixed(
        plan.model.rhs,
        initial_state(plan.model, plan.init),
        plan.horizon,
        dt=plan.engine.dt,
        sample_every=plan.engine.sample_every,
        species=plan.model.species,
    )
    out = _out_dir(plan)
    _write(out / f"{plan.name}-ode.csv", trajectory_csv(traj))
    print(f"{plan.name}: deterministic run, {plan.horizon:g} days, dt={plan.engine.dt:g}")
    print(f"final state: {_final_line(traj, plan.model.species)}")
    return 0


def cmd_run_abm(args) -> int:
    plan = _load_plan(args)
    ensemble = run_ensemble(
        plan.model, plan.init, plan.engine, plan.horizon, plan.n_reps, plan.seed
    )
    out = _out_dir(plan)
    _write(out / f"{plan.name}-abm-mean.csv", trajectory_csv(ensemble.mean))
    print(
        f"{plan.name}: {plan.n_reps} replications, backend={plan.engine.backend}, "
        f"seed={plan.seed}"
    )
    print(f"final mean state: {_final_line(ensemble.mean, plan.model.species)}")
    return 0


def cmd_compare(args) -> int:
    plan = _load_plan(args)
    if not 0 < args.alpha < 1:
        raise UsageError("--alpha must lie in (0, 1)")
    result = _run_experiment_for(plan, args.alpha)
    out = _out_dir(plan)
    _write(out / f"{plan.name}-ode.csv", emit_csv(result, "ode"))
    _write(out / f"{plan.name}-abm-mean.csv", emit_csv(result, "abm-mean"))
    _write(out / f"{plan.name}-report.csv", report_csv(result.report))
    if args.plot:
        for name in plan.model.species:
            _write(
                out / f"{plan.name}-{name}.svg",
                comparison_svg(result.ode, result.ensemble.mean, name),
            )
    print(
        f"{plan.name}: {plan.n_reps} replications vs deterministic run, "
        f"seed={plan.seed}, alpha={args.alpha:g}"
    )
    for name in plan.model.species:
        verdict = "reject" if result.report.reject[name] else "fail to reject"
        print(
            f"  {name}: U={format_number(result.report.u[name])} "
            f"p={format_number(result.report.p_value[name])} -> {verdict}"
        )
    print(result.report.decision_line())
    return 0


def cmd_census(args) -> int:
    plan = _load_plan(args)
    day = args.extinct_by if args.extinct_by is not None else plan.horizon
    if not 0 < day <= plan.horizon:
        raise UsageError("--extinct-by must lie in (0, horizon]")
    predicates = {
        f"{name}_extinct_by_{day:g}": species_extinct_by(name, day)
        for name in plan.model.species
    }
    result = _run_experiment_for(plan, census_predicates=predicates)
    out = _out_dir(plan)
    _write(out / f"{plan.name}-census.csv", census_csv(result.census))
    print(f"{plan.name}: {plan.n_reps} replications, seed={plan.seed}")
    for name, entry in result.census.items():
        print(
            f"  {name}: {entry.count}/{entry.n_reps} "
            f"(frequency {format_number(entry.frequency)})"
        )
    return 0


def cmd_list_scenarios(args) -> int:
    for entry in scenario_registry():
        print(f"{entry.name:<10} {entry.description}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, UnknownScenario) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except SimulationError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
