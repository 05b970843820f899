"""JSON run configurations.

A config either names a stock scenario (optionally overriding its
parameters, initial counts, horizon, or engine settings) or defines a
model inline: species, parameters, channels with textual rate
expressions, and influxes.  `parse_config` validates everything up
front, builds (and drift-checks) the model, and returns a `RunPlan`
ready for the CLI or direct use.

Recognised top-level keys: scenario, model, params, init, engine,
n_reps, horizon, seed, outputs.  Engine keys: dt, backend, rate_policy,
sample_every, max_rate_dt.  Unknown keys anywhere are errors, so typos
fail loudly instead of silently running defaults.

An `init` override replaces the scenario's initial counts wholesale:
species omitted from it start at zero.  `params` overrides merge into
the scenario's stock parameter record field by field.
"""

from __future__ import annotations

import dataclasses
import json
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Any

from .abm import (
    EngineConfig,
    InfluxSpec,
    RemoveOther,
    RemoveSelf,
    SignedBranch,
    Spawn,
    TransitionSpec,
    aggregate_drift,
)
from .core import SimulationError
from .exprparse import parse_rate_expr
from .models import (
    ModelSpec,
    ScenarioConfig,
    build_model,
    check_drift_equivalence,
    find_scenario,
)


class ConfigError(SimulationError):
    """Base class for configuration problems."""


class ConfigSyntaxError(ConfigError):
    """The config text is not valid JSON; carries line and column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class UnknownKey(ConfigError):
    """A config object contained a key this package does not define."""


class MissingRequired(ConfigError):
    """A required config key is absent."""


class InvalidValue(ConfigError):
    """A config value has the wrong type or an out-of-range value."""


@dataclass(eq=False)
class RunPlan:
    """A validated, executable run description."""

    name: str
    model: ModelSpec
    init: dict[str, int]
    horizon: float
    engine: EngineConfig
    n_reps: int
    seed: int | None
    outputs: str | None
    scenario: ScenarioConfig | None = None


_TOP_KEYS = {
    "scenario",
    "model",
    "params",
    "init",
    "engine",
    "n_reps",
    "horizon",
    "seed",
    "outputs",
}
_ENGINE_KEYS = {"dt", "backend", "rate_policy", "sample_every", "max_rate_dt"}
_MODEL_KEYS = {"name", "species", "params", "channels", "influxes"}
_CHANNEL_KEYS = {"name", "source", "rate", "effect", "rate_policy"}
_INFLUX_KEYS = {"name", "species", "rate"}


def _require_keys(obj: Mapping, allowed: set[str], where: str):
    if not isinstance(obj, Mapping):
        raise InvalidValue(f"{where} must be a JSON object, got {type(obj).__name__}")
    unknown = set(obj) - allowed
    if unknown:
        raise UnknownKey(
            f"unknown {where} key(s): {', '.join(sorted(unknown))} "
            f"(allowed: {', '.join(sorted(allowed))})"
        )


def _number(obj: Mapping, key: str, where: str) -> float:
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidValue(f"{where}.{key} must be a number, got {value!r}")
    return float(value)


def _type_check(value, types, what: str):
    if not isinstance(value, types):
        raise InvalidValue(f"{what} has the wrong type: {value!r}")
    return value


def _engine_from(obj: Mapping | None, base: EngineConfig) -> EngineConfig:
    if obj is None:
        return base
    _require_keys(obj, _ENGINE_KEYS, "engine")
    fields: dict[str, Any] = {}
    for key in ("dt", "sample_every", "max_rate_dt"):
        if key in obj:
            fields[key] = _number(obj, key, "engine")
    for key in ("backend", "rate_policy"):
        if key in obj:
            fields[key] = _type_check(obj[key], str, f"engine.{key}")
    try:
        return dataclasses.replace(base, **fields)
    except ValueError as exc:
        raise InvalidValue(f"engine settings rejected: {exc}") from None


def _init_from(obj: Mapping, species: tuple[str, ...]) -> dict[str, int]:
    _type_check(obj, Mapping, "init")
    unknown = set(obj) - set(species)
    if unknown:
        raise InvalidValue(
            f"init names unknown species: {', '.join(sorted(unknown))} "
            f"(model has {', '.join(species)})"
        )
    out: dict[str, int] = {}
    for name in species:
        raw = obj.get(name, 0)
        value = _number({name: raw}, name, "init")
        if value < 0 or value != int(value):
            raise InvalidValue(f"init.{name} must be a non-negative integer")
        out[name] = int(value)
    return out


_EFFECTS = {"remove-self": RemoveSelf, "signed-branch": SignedBranch}


def _effect_from(text: str, species: tuple[str, ...], where: str):
    _type_check(text, str, f"{where}.effect")
    if text in _EFFECTS:
        return _EFFECTS[text]()
    kind, sep, target = text.partition(":")
    if sep and kind in ("spawn", "remove-other"):
        if target not in species:
            raise InvalidValue(
                f"{where}.effect targets unknown species {target!r}"
            )
        return Spawn(target) if kind == "spawn" else RemoveOther(target)
    raise InvalidValue(
        f"{where}.effect must be one of spawn:<species>, remove-self, "
        f"remove-other:<species>, signed-branch; got {text!r}"
    )


def _inline_model(obj: Mapping) -> tuple[ModelSpec, tuple[str, ...]]:
    _require_keys(obj, _MODEL_KEYS, "model")
    for key in ("species", "params", "channels"):
        if key not in obj:
            raise MissingRequired(f"model.{key} is required for an inline model")
    species = tuple(_type_check(obj["species"], list, "model.species"))
    if not species or not all(isinstance(s, str) for s in species):
        raise InvalidValue("model.species must be a non-empty list of names")
    if len(set(species)) != len(species):
        raise InvalidValue("model.species contains duplicates")
    params_obj = _type_check(obj["params"], Mapping, "model.params")
    params: dict[str, float] = {}
    for key in params_obj:
        params[key] = _number(params_obj, key, "model.params")

    transitions = []
    for i, ch in enumerate(_type_check(obj["channels"], list, "model.channels")):
        where = f"channels[{i}]"
        _require_keys(ch, _CHANNEL_KEYS, where)
        for key in ("source", "rate", "effect"):
            if key not in ch:
                raise MissingRequired(f"{where}.{key} is required")
        source = _type_check(ch["source"], str, f"{where}.source")
        if source not in species:
            raise InvalidValue(f"{where}.source is not a species: {source!r}")
        try:
            rate = parse_rate_expr(
                _type_check(ch["rate"], str, f"{where}.rate"), params, species
            )
        except SimulationError as exc:
            raise InvalidValue(f"{where}.rate: {exc}") from None
        policy = ch.get("rate_policy")
        try:
            transitions.append(
                TransitionSpec(
                    name=ch.get("name", f"channel_{i}"),
                    source=source,
                    rate=rate,
                    effect=_effect_from(ch["effect"], species, where),
                    rate_policy=policy,
                )
            )
        except ValueError as exc:
            raise InvalidValue(f"{where}: {exc}") from None

    influxes = []
    for i, fl in enumerate(_type_check(obj.get("influxes", []), list, "model.influxes")):
        where = f"influxes[{i}]"
        _require_keys(fl, _INFLUX_KEYS, where)
        for key in ("species", "rate"):
            if key not in fl:
                raise MissingRequired(f"{where}.{key} is required")
        target = _type_check(fl["species"], str, f"{where}.species")
        if target not in species:
            raise InvalidValue(f"{where}.species is not a species: {target!r}")
        try:
            rate = parse_rate_expr(
                _type_check(fl["rate"], str, f"{where}.rate"), params, species
            )
        except SimulationError as exc:
            raise InvalidValue(f"{where}.rate: {exc}") from None
        influxes.append(InfluxSpec(fl.get("name", f"influx_{i}"), target, rate))

    transitions = tuple(transitions)
    influxes = tuple(influxes)

    def rhs(t, y):
        return aggregate_drift(species, transitions, influxes, params, y)

    spec = ModelSpec(
        name=str(obj.get("name", "custom")),
        species=species,
        params=params,
        rhs=rhs,
        transitions=transitions,
        influxes=influxes,
        notes=("deterministic side derived from the channel table",),
    )
    try:
        check_drift_equivalence(spec)
    except SimulationError as exc:
        raise InvalidValue(f"inline model does not evaluate cleanly: {exc}") from None
    return spec, species


def _scenario_with_params(base: ScenarioConfig, overrides: Mapping) -> ScenarioConfig:
    """Apply a params override on top of a stock scenario's parameters."""
    stock = build_model(base).params
    _type_check(overrides, Mapping, "params")
    valid = {f.name for f in dataclasses.fields(stock)}
    unknown = set(overrides) - valid
    if unknown:
        raise UnknownKey(
            f"unknown parameter(s) for {base.name}: {', '.join(sorted(unknown))}"
        )
    values = {key: _number(overrides, key, "params") for key in overrides}
    return dataclasses.replace(base, params=dataclasses.replace(stock, **values))


def parse_config(text: str) -> RunPlan:
    """Parse and validate a JSON run configuration.

    Returns a RunPlan with the model already built and drift-checked.
    Raises ConfigSyntaxError (bad JSON), UnknownKey, MissingRequired,
    InvalidValue, or UnknownScenario."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    _require_keys(doc, _TOP_KEYS, "config")
    has_scenario = "scenario" in doc
    has_model = "model" in doc
    if has_scenario == has_model:
        if has_scenario:
            raise InvalidValue("give either scenario or model, not both")
        raise MissingRequired("config needs a scenario name or an inline model")

    seed = None
    if "seed" in doc:
        value = doc["seed"]
        if isinstance(value, bool) or not isinstance(value, int):
            raise InvalidValue(f"seed must be an integer, got {value!r}")
        seed = value
    n_reps = 50
    if "n_reps" in doc:
        value = doc["n_reps"]
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise InvalidValue(f"n_reps must be a positive integer, got {value!r}")
        n_reps = value
    outputs = None
    if "outputs" in doc:
        outputs = _type_check(doc["outputs"], str, "outputs")

    if has_scenario:
        name = _type_check(doc["scenario"], str, "scenario")
        base = find_scenario(name)
        if "params" in doc:
            base = _scenario_with_params(base, doc["params"])
        model = build_model(base)
        engine = _engine_from(doc.get("engine"), base.engine)
        init = dict(base.init)
        if "init" in doc:
            init = _init_from(doc["init"], model.species)
        horizon = base.horizon
        if "horizon" in doc:
            horizon = _number(doc, "horizon", "config")
        if horizon <= 0:
            raise InvalidValue(f"horizon must be > 0, got {horizon!r}")
        if "n_reps" not in doc:
            n_reps = base.n_reps
        return RunPlan(
            name=base.name,
            model=model,
            init={sp: int(init.get(sp, 0)) for sp in model.species},
            horizon=horizon,
            engine=engine,
            n_reps=n_reps,
            seed=seed,
            outputs=outputs,
            scenario=base,
        )

    if "params" in doc:
        raise InvalidValue(
            "top-level params overrides apply to scenarios; inline models "
            "keep their parameters under model.params"
        )
    model, species = _inline_model(doc["model"])
    if "init" not in doc:
        raise MissingRequired("init is required with an inline model")
    init = _init_from(doc["init"], species)
    if "horizon" not in doc:
        raise MissingRequired("horizon is required with an inline model")
    horizon = _number(doc, "horizon", "config")
    if horizon <= 0:
        raise InvalidValue(f"horizon must be > 0, got {horizon!r}")
    engine = _engine_from(doc.get("engine"), EngineConfig())
    return RunPlan(
        name=model.name,
        model=model,
        init=init,
        horizon=horizon,
        engine=engine,
        n_reps=n_reps,
        seed=seed,
        outputs=outputs,
        scenario=None,
    )


def plan_from_scenario(name: str) -> RunPlan:
    """A RunPlan for a stock scenario with no overrides."""
    base = find_scenario(name)
    model = build_model(base)
    return RunPlan(
        name=base.name,
        model=model,
        init={sp: int(base.init.get(sp, 0)) for sp in model.species},
        horizon=base.horizon,
        engine=base.engine,
        n_reps=base.n_reps,
        seed=None,
        outputs=None,
        scenario=base,
    )
