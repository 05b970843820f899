"""Stochastic half of the engine: transition channels and two backends.

A model's stochastic side is a list of transition channels.  Each
channel has a source species, a per-agent rate expression (per day), and
an effect:

* ``Spawn(target)``: a firing creates new agents of ``target`` without
  consuming the source agent (the rate may be read as events per source
  agent per day).
* ``RemoveSelf()``: a firing removes the source agent.
* ``RemoveOther(target)``: a "message"; a firing removes one uniformly
  random agent of ``target``.  If none remain the message is dropped.
* ``SignedBranch()``: the rate may be negative; its sign selects between
  spawning one agent of the source species (positive) and removing the
  source agent (negative), both at magnitude ``|rate|``.  This is how a
  net logistic growth term becomes a single channel.

`InfluxSpec` rows add agents independently of any existing agent, at an
absolute rate per day (arrivals are Poisson).

Two backends execute the same channel tables:

* ``tau-leap``: population-level leaping.  Per step, spawn-like firings
  are Poisson draws and removal-like firings are Binomial thinning with
  per-agent survival ``exp(-rate*dt)``.  Steps auto-subdivide so that
  ``|rate|*h <= max_rate_dt`` for every channel that can fire.  Removal
  draws exceeding the agents actually present are clamped (and counted).
* ``per-agent``: every agent is an individual.  Firings are drawn per
  agent, removals resolve before messages, messages pick their victims
  without replacement among agents still alive, survivors spawn, and
  influx arrivals land at the end of the step.  Agents remember their
  birth time; under the ``frozen-at-birth`` rate policy each agent keeps
  the channel rates observed when it was born instead of tracking the
  live population.

Both backends aggregate to the same mean-field drift, which is exactly
what `aggregate_drift` computes and what model construction checks
against the ODE right-hand side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from collections.abc import Mapping, Sequence

import numpy as np

from . import _kernel
from .core import (
    NegativeState,
    PopulationState,
    SeededStream,
    SimulationError,
    Trajectory,
    splitmix64,
)
from .rates import RateExpr, classify_rate, compile_rate, evaluate, stack_depth

eval_rate = evaluate

BACKEND_TAU_LEAP = "tau-leap"
BACKEND_PER_AGENT = "per-agent"
BACKENDS = (BACKEND_TAU_LEAP, BACKEND_PER_AGENT)

POLICY_LIVE = "live"
POLICY_FROZEN = "frozen-at-birth"
POLICIES = (POLICY_LIVE, POLICY_FROZEN)


class IncompatiblePolicy(SimulationError):
    """The requested rate policy is not available on this backend
    (frozen-at-birth needs individual agents, so it is per-agent only)."""


class InvalidRate(SimulationError):
    """A channel rate evaluated to something unusable during a run
    (non-finite, or negative on a channel that is not signed-branch)."""


# ---------------------------------------------------------------------------
# Channel specifications


@dataclass(frozen=True)
class Spawn:
    target: str
    count: int = 1

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("spawn count must be >= 1")


@dataclass(frozen=True)
class RemoveSelf:
    pass


@dataclass(frozen=True)
class RemoveOther:
    target: str


@dataclass(frozen=True)
class SignedBranch:
    pass


Effect = Spawn | RemoveSelf | RemoveOther | SignedBranch


@dataclass(frozen=True)
class TransitionSpec:
    """One transition channel: source species, per-agent rate, effect.

    `rate_policy` overrides the engine-wide policy for this channel when
    set ("live" or "frozen-at-birth")."""

    name: str
    source: str
    rate: RateExpr
    effect: Effect
    rate_policy: str | None = None

    def __post_init__(self):
        if not isinstance(self.rate, RateExpr):
            raise TypeError(f"rate must be a RateExpr, got {type(self.rate).__name__}")
        if not isinstance(self.effect, (Spawn, RemoveSelf, RemoveOther, SignedBranch)):
            raise TypeError(f"unknown effect {self.effect!r}")
        if self.rate_policy is not None and self.rate_policy not in POLICIES:
            raise ValueError(f"unknown rate policy {self.rate_policy!r}")


@dataclass(frozen=True)
class InfluxSpec:
    """A constant-context arrival stream: agents of `species` appear at
    the (state-evaluated) absolute rate per day."""

    name: str
    species: str
    rate: RateExpr

    def __post_init__(self):
        if not isinstance(self.rate, RateExpr):
            raise TypeError(f"rate must be a RateExpr, got {type(self.rate).__name__}")


@dataclass(frozen=True)
class EngineConfig:
    """How to run the stochastic side: step size, backend, rate policy,
    sampling interval, and the per-channel subdivision guard."""

    dt: float = 0.01
    backend: str = BACKEND_TAU_LEAP
    rate_policy: str = POLICY_LIVE
    max_rate_dt: float = 0.1
    sample_every: float = 1.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.rate_policy not in POLICIES:
            raise ValueError(f"unknown rate policy {self.rate_policy!r}")
        if not (0 < self.max_rate_dt < 1):
            raise ValueError("max_rate_dt must lie in (0, 1)")
        if self.sample_every <= 0:
            raise ValueError("sample_every must be > 0")


# ---------------------------------------------------------------------------
# Drift aggregation


def _counts_mapping(species: Sequence[str], counts) -> dict[str, float]:
    if isinstance(counts, Mapping):
        return {name: float(counts.get(name, 0)) for name in species}
    arr = np.asarray(counts, dtype=float)
    if arr.shape != (len(species),):
        raise ValueError(
            f"counts shape {arr.shape} does not match {len(species)} species"
        )
    return {name: float(arr[i]) for i, name in enumerate(species)}


def aggregate_drift(
    species: Sequence[str],
    transitions: Sequence[TransitionSpec],
    influxes: Sequence[InfluxSpec],
    params,
    counts,
) -> np.ndarray:
    """Expected instantaneous rate of change per species.

    Sums source_count * rate over every channel (signing removals) plus
    influx rates.  Channels with an empty source contribute zero and
    their rates are not evaluated, matching engine behaviour.
    """
    species = tuple(species)
    index = {name: i for i, name in enumerate(species)}
    cmap = _counts_mapping(species, counts)
    drift = np.zeros(len(species))
    for tr in transitions:
        n_src = cmap[tr.source]
        if n_src == 0:
            continue
        r = evaluate(tr.rate, cmap, params)
        flux = n_src * r
        eff = tr.effect
        if isinstance(eff, Spawn):
            drift[index[eff.target]] += flux * eff.count
        elif isinstance(eff, RemoveSelf):
            drift[index[tr.source]] -= flux
        elif isinstance(eff, RemoveOther):
            drift[index[eff.target]] -= flux
        else:  # SignedBranch: the sign of the rate is the sign of the drift
            drift[index[tr.source]] += flux
    for fl in influxes:
        drift[index[fl.species]] += evaluate(fl.rate, cmap, params)
    return drift


def apply_influx(
    state: np.ndarray, species_index: int, rate: float, dt: float, rng
) -> np.ndarray:
    """Return a copy of `state` with Poisson(rate*dt) arrivals added to
    one species."""
    if rate < 0:
        raise InvalidRate(f"influx rate must be >= 0, got {rate!r}")
    out = np.asarray(state, dtype=np.int64).copy()
    out[species_index] += rng.poisson(rate * dt)
    return out


# ---------------------------------------------------------------------------
# Reference tau-leap step (pure numpy; the jitted kernel mirrors this)


def step_tau_leap(
    state: np.ndarray,
    species: Sequence[str],
    transitions: Sequence[TransitionSpec],
    influxes: Sequence[InfluxSpec],
    params,
    dt: float,
    rng,
    max_rate_dt: float = 0.1,
    counters: dict | None = None,
) -> np.ndarray:
    """Advance integer counts by one step of population-level leaping.

    The step subdivides itself so no channel sees |rate|*h above
    `max_rate_dt`.  Spawn-like draws are Poisson, removal-like draws are
    Binomial thinning, removals clamp to availability in declared order.
    `counters`, when given, accumulates "substeps" and "clamped".
    """
    species = tuple(species)
    index = {name: i for i, name in enumerate(species)}
    counts = np.asarray(state)
    if counts.dtype.kind not in "iu":
        raise TypeError("tau-leap state must be an integer array")
    if np.any(counts < 0):
        raise NegativeState(f"negative agent counts: {counts!r}")
    counts = counts.astype(np.int64).copy()

    remaining = float(dt)
    while remaining > 0.0:
        cmap = {name: float(counts[i]) for name, i in index.items()}
        rates: list[float] = []
        max_rate = 0.0
        any_active = False
        for tr in transitions:
            if counts[index[tr.source]] == 0:
                rates.append(0.0)
                continue
            r = evaluate(tr.rate, cmap, params)
            if not math.isfinite(r):
                raise InvalidRate(f"channel {tr.name!r} rate is not finite: {r!r}")
            if r < 0 and not isinstance(tr.effect, SignedBranch):
                raise InvalidRate(f"channel {tr.name!r} has negative rate {r!r}")
            rates.append(r)
            if r != 0.0:
                any_active = True
                max_rate = max(max_rate, abs(r))
        influx_rates: list[float] = []
        for fl in influxes:
            r = evaluate(fl.rate, cmap, params)
            if not math.isfinite(r) or r < 0:
                raise InvalidRate(f"influx {fl.name!r} rate invalid: {r!r}")
            influx_rates.append(r)
            if r > 0.0:
                any_active = True
                max_rate = max(max_rate, r)
        if not any_active:
            break
        if max_rate * remaining <= max_rate_dt * (1.0 + 1e-12):
            h = remaining
        else:
            h = min(remaining, max_rate_dt / max_rate)
        if counters is not None:
            counters["substeps"] = counters.get("substeps", 0) + 1

        draws: list[int] = []
        for tr, r in zip(transitions, rates):
            n_src = counts[index[tr.source]]
            if n_src == 0 or r == 0.0:
                draws.append(0)
            elif isinstance(tr.effect, Spawn) or (
                isinstance(tr.effect, SignedBranch) and r > 0
            ):
                draws.append(int(rng.poisson(n_src * r * h)))
            else:
                p = -math.expm1(-abs(r) * h)
                draws.append(int(rng.binomial(n_src, p)))
        influx_draws = [
            int(rng.poisson(r * h)) if r > 0 else 0 for r in influx_rates
        ]

        removed = np.zeros(len(species), dtype=np.int64)
        added = np.zeros(len(species), dtype=np.int64)
        for tr, r, n in zip(transitions, rates, draws):
            if n == 0:
                continue
            eff = tr.effect
            if isinstance(eff, RemoveSelf) or (
                isinstance(eff, SignedBranch) and r < 0
            ):
                j = index[tr.source]
            elif isinstance(eff, RemoveOther):
                j = index[eff.target]
            else:
                continue
            room = int(counts[j] - removed[j])
            take = min(n, room)
            if counters is not None and take < n:
                counters["clamped"] = counters.get("clamped", 0) + (n - take)
            removed[j] += take
        for tr, r, n in zip(transitions, rates, draws):
            if n == 0:
                continue
            eff = tr.effect
            if isinstance(eff, Spawn):
                added[index[eff.target]] += n * eff.count
            elif isinstance(eff, SignedBranch) and r > 0:
                added[index[tr.source]] += n
        for fl, n in zip(influxes, influx_draws):
            added[index[fl.species]] += n
        counts += added - removed
        remaining -= h
    return counts


# ---------------------------------------------------------------------------
# Per-agent engine


class _AgentStore:
    """Growable per-species agent arrays: birth times, alive flags, and
    (when needed) frozen per-channel rates."""

    def __init__(self, n_channels: int, keep_frozen: bool):
        cap = 16
        self.birth = np.zeros(cap)
        self.alive = np.zeros(cap, dtype=bool)
        self.frozen = np.zeros((cap, n_channels)) if keep_frozen else None
        self.size = 0  # used slots (alive or dead)
        self.count = 0  # alive agents

    def _grow(self, need: int):
        cap = self.birth.size
        while cap < need:
            cap *= 2
        if cap != self.birth.size:
            self.birth = np.resize(self.birth, cap)
            self.alive = np.resize(self.alive, cap)
            if self.frozen is not None:
                new = np.zeros((cap, self.frozen.shape[1]))
                new[: self.size] = self.frozen[: self.size]
                self.frozen = new

    def add(self, k: int, birth_time: float, frozen_row: np.ndarray | None):
        if k <= 0:
            return
        self._grow(self.size + k)
        sl = slice(self.size, self.size + k)
        self.birth[sl] = birth_time
        self.alive[sl] = True
        if self.frozen is not None:
            self.frozen[sl] = frozen_row
        self.size += k
        self.count += k

    def alive_indices(self) -> np.ndarray:
        return np.nonzero(self.alive[: self.size])[0]

    def kill(self, slots: np.ndarray):
        self.alive[slots] = False
        self.count -= slots.size

    def maybe_compact(self):
        if self.size > 4 * self.count + 64:
            keep = self.alive_indices()
            n = keep.size
            self.birth[:n] = self.birth[keep]
            self.alive[:n] = True
            self.alive[n : self.size] = False
            if self.frozen is not None:
                self.frozen[:n] = self.frozen[keep]
            self.size = n


class PerAgentEngine:
    """Individual-agent executor for one replication.

    Construct with a model (anything exposing species/transitions/
    influxes/params), integer initial counts aligned to the species
    tuple, an EngineConfig, and a numpy Generator.  `step()` advances one
    engine step of `config.dt` days, subdividing internally under the
    same |rate|*h guard as the tau-leap backend.

    Within a substep: firings are drawn per agent from rates observed at
    the substep start; self-removals resolve first; messages then fire
    from surviving senders, each removing a uniformly random victim still
    alive (dropped when none remain); survivors' spawn firings create
    newborns; influx arrivals land last.  Newborns carry birth time t+h
    and, for frozen-at-birth channels, the rates in force when they were
    created.
    """

    def __init__(self, model, init_counts, config: EngineConfig, rng, t0: float = 0.0):
        self.species: tuple[str, ...] = tuple(model.species)
        self.transitions: tuple[TransitionSpec, ...] = tuple(model.transitions)
        self.influxes: tuple[InfluxSpec, ...] = tuple(model.influxes)
        self.params = model.params
        self.config = config
        self.rng = rng
        self.t = float(t0)
        self.substeps = 0
        self.dropped_messages = 0

        if config.backend != BACKEND_PER_AGENT:
            raise ValueError("PerAgentEngine requires a per-agent EngineConfig")
        self._index = {name: i for i, name in enumerate(self.species)}
        self._policy = tuple(
            tr.rate_policy if tr.rate_policy is not None else config.rate_policy
            for tr in self.transitions
        )
        # Channels grouped by source species, in declared order.
        self._channels_of: list[list[int]] = [[] for _ in self.species]
        self._column: dict[int, int] = {}
        for c, tr in enumerate(self.transitions):
            sp = self._index[tr.source]
            self._column[c] = len(self._channels_of[sp])
            self._channels_of[sp].append(c)
        counts = np.asarray(init_counts)
        if counts.dtype.kind not in "iu":
            raise TypeError("per-agent initial counts must be integers")
        if counts.shape != (len(self.species),):
            raise ValueError("initial counts do not match species")
        if np.any(counts < 0):
            raise NegativeState(f"negative initial counts: {counts!r}")

        self._store: list[_AgentStore] = []
        for sp, name in enumerate(self.species):
            keep = any(
                self._policy[c] == POLICY_FROZEN for c in self._channels_of[sp]
            )
            self._store.append(_AgentStore(len(self._channels_of[sp]), keep))
        init_rates = self._step_start_rates(counts.astype(float))
        for sp in range(len(self.species)):
            self._store[sp].add(
                int(counts[sp]), self.t, self._frozen_row(sp, init_rates)
            )

    # -- helpers ---------------------------------------------------------

    def counts(self) -> np.ndarray:
        return np.array([s.count for s in self._store], dtype=np.int64)

    def _step_start_rates(self, totals: np.ndarray) -> dict[int, float]:
        """Evaluate channel rates at the given totals, skipping channels
        whose source species is empty (they cannot fire and newborn rows
        for them are produced on demand via _rate_at)."""
        cmap = {name: float(totals[i]) for name, i in self._index.items()}
        self._cmap = cmap
        rates: dict[int, float] = {}
        for c, tr in enumerate(self.transitions):
            if totals[self._index[tr.source]] > 0:
                rates[c] = self._checked(c, evaluate(tr.rate, cmap, self.params))
        return rates

    def _checked(self, c: int, r: float) -> float:
        if not math.isfinite(r):
            raise InvalidRate(
                f"channel {self.transitions[c].name!r} rate is not finite: {r!r}"
            )
        if r < 0 and not isinstance(self.transitions[c].effect, SignedBranch):
            raise InvalidRate(
                f"channel {self.transitions[c].name!r} has negative rate {r!r}"
            )
        return r

    def _rate_at(self, c: int, rates: dict[int, float]) -> float:
        if c not in rates:
            rates[c] = self._checked(
                c, evaluate(self.transitions[c].rate, self._cmap, self.params)
            )
        return rates[c]

    def _frozen_row(self, sp: int, rates: dict[int, float]) -> np.ndarray | None:
        if self._store[sp].frozen is None:
            return None
        return np.array([self._rate_at(c, rates) for c in self._channels_of[sp]])

    # -- stepping --------------------------------------------------------

    def step(self, dt: float | None = None):
        """Advance one engine step (default: config.dt days)."""
        remaining = self.config.dt if dt is None else float(dt)
        guard = self.config.max_rate_dt
        while remaining > 0.0:
            totals = self.counts().astype(float)
            rates = self._step_start_rates(totals)
            idx = [self._store[sp].alive_indices() for sp in range(len(self.species))]

            max_rate = 0.0
            any_active = False
            for c, tr in enumerate(self.transitions):
                sp = self._index[tr.source]
                if idx[sp].size == 0:
                    continue
                if self._policy[c] == POLICY_FROZEN:
                    col = self._column[c]
                    m = float(np.abs(self._store[sp].frozen[idx[sp], col]).max())
                else:
                    m = abs(rates[c])
                if m > 0:
                    any_active = True
                    max_rate = max(max_rate, m)
            influx_rates = []
            for fl in self.influxes:
                r = evaluate(fl.rate, self._cmap, self.params)
                if not math.isfinite(r) or r < 0:
                    raise InvalidRate(f"influx {fl.name!r} rate invalid: {r!r}")
                influx_rates.append(r)
                if r > 0:
                    any_active = True
                    max_rate = max(max_rate, r)
            if not any_active:
                self.t += remaining
                break
            if max_rate * remaining <= guard * (1.0 + 1e-12):
                h = remaining
            else:
                h = min(remaining, guard / max_rate)
            self.substeps += 1

            # Draw firings for every channel, declared order, from
            # step-start rates.  `fired[c]` aligns with idx[source].
            fired: list[np.ndarray] = []
            sign: list[np.ndarray | float] = []
            for c, tr in enumerate(self.transitions):
                sp = self._index[tr.source]
                n = idx[sp].size
                if n == 0:
                    fired.append(np.zeros(0, dtype=bool))
                    sign.append(1.0)
                    continue
                if self._policy[c] == POLICY_FROZEN:
                    rvec = self._store[sp].frozen[idx[sp], self._column[c]]
                    p = -np.expm1(-np.abs(rvec) * h)
                    fired.append(self.rng.random(n) < p)
                    sign.append(np.sign(rvec))
                else:
                    r = self._rate_at(c, rates)
                    p = -math.expm1(-abs(r) * h)
                    fired.append(self.rng.random(n) < p)
                    sign.append(1.0 if r >= 0 else -1.0)

            dead = [np.zeros(ix.size, dtype=bool) for ix in idx]

            # Phase 1: self-removals.
            for c, tr in enumerate(self.transitions):
                sp = self._index[tr.source]
                if isinstance(tr.effect, RemoveSelf):
                    dead[sp] |= fired[c]
                elif isinstance(tr.effect, SignedBranch):
                    dead[sp] |= fired[c] & (np.asarray(sign[c]) < 0)

            # Phase 2: messages from surviving senders.
            for c, tr in enumerate(self.transitions):
                if not isinstance(tr.effect, RemoveOther):
                    continue
                sp = self._index[tr.source]
                tg = self._index[tr.effect.target]
                n_fire = int((fired[c] & ~dead[sp]).sum())
                if n_fire == 0:
                    continue
                pool = np.nonzero(~dead[tg])[0]
                psize = pool.size
                for _ in range(n_fire):
                    if psize == 0:
                        self.dropped_messages += 1
                        continue
                    j = int(self.rng.integers(psize))
                    dead[tg][pool[j]] = True
                    pool[j] = pool[psize - 1]
                    psize -= 1

            # Phase 3: spawns from agents that survived phases 1-2.
            newborn = np.zeros(len(self.species), dtype=np.int64)
            for c, tr in enumerate(self.transitions):
                sp = self._index[tr.source]
                if isinstance(tr.effect, Spawn):
                    k = int((fired[c] & ~dead[sp]).sum())
                    newborn[self._index[tr.effect.target]] += k * tr.effect.count
                elif isinstance(tr.effect, SignedBranch):
                    k = int((fired[c] & ~dead[sp] & (np.asarray(sign[c]) > 0)).sum())
                    newborn[sp] += k

            # Phase 4: influx arrivals.
            for fl, r in zip(self.influxes, influx_rates):
                if r > 0:
                    newborn[self._index[fl.species]] += self.rng.poisson(r * h)

            # Apply deaths, then append newborns with step-start rates.
            for sp in range(len(self.species)):
                hit = np.nonzero(dead[sp])[0]
                if hit.size:
                    self._store[sp].kill(idx[sp][hit])
            birth_time = self.t + h
            for sp in range(len(self.species)):
                k = int(newborn[sp])
                if k:
                    self._store[sp].add(k, birth_time, self._frozen_row(sp, rates))
                self._store[sp].maybe_compact()
            self.t = birth_time
            remaining -= h


def step_per_agent(engine: PerAgentEngine, dt: float | None = None) -> np.ndarray:
    """Advance a per-agent engine one step and return the new counts."""
    engine.step(dt)
    return engine.counts()


# ---------------------------------------------------------------------------
# Replications and ensembles


def _sample_grid(t_end: float, sample_every: float) -> np.ndarray:
    n = round(t_end / sample_every)
    if n < 1 or abs(n * sample_every - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError(
            f"horizon {t_end!r} is not a multiple of sample interval {sample_every!r}"
        )
    return sample_every * np.arange(n + 1)


def _steps_per_sample(config: EngineConfig) -> int:
    k = round(config.sample_every / config.dt)
    if k < 1 or abs(k * config.dt - config.sample_every) > 1e-9 * config.sample_every:
        raise ValueError(
            f"sample interval {config.sample_every!r} is not a multiple of "
            f"dt {config.dt!r}"
        )
    return k


def _init_counts(model, init) -> np.ndarray:
    species = tuple(model.species)
    if isinstance(init, PopulationState):
        values = np.asarray(init.values)
    elif isinstance(init, Mapping):
        unknown = set(init) - set(species)
        if unknown:
            raise KeyError(f"initial counts name unknown species: {sorted(unknown)}")
        values = np.array([init.get(name, 0) for name in species], dtype=float)
    else:
        values = np.asarray(init)
    if values.shape != (len(species),):
        raise ValueError(
            f"initial counts shape {values.shape} does not match species {species}"
        )
    rounded = np.rint(values)
    if np.any(np.abs(values - rounded) > 1e-9):
        raise ValueError(f"agent counts must be integral, got {values!r}")
    if np.any(rounded < 0):
        raise NegativeState(f"negative initial counts: {values!r}")
    return rounded.astype(np.int64)


_KIND_CODE = {Spawn: 0, RemoveSelf: 1, RemoveOther: 2, SignedBranch: 3}


def _kernel_tables(model):
    """Flatten a model's channel table into the arrays the jitted
    tau-leap kernel consumes (influxes appended after transitions)."""
    species = tuple(model.species)
    index = {name: i for i, name in enumerate(species)}
    kinds, srcs, tgts, mults, programs, patterns = [], [], [], [], [], []
    for tr in model.transitions:
        eff = tr.effect
        kinds.append(_KIND_CODE[type(eff)])
        srcs.append(index[tr.source])
        if isinstance(eff, Spawn):
            tgts.append(index[eff.target])
            mults.append(eff.count)
        elif isinstance(eff, RemoveOther):
            tgts.append(index[eff.target])
            mults.append(1)
        else:
            tgts.append(index[tr.source])
            mults.append(1)
        programs.append(compile_rate(tr.rate, species, model.params))
        patterns.append(classify_rate(tr.rate, species, model.params))
    for fl in model.influxes:
        kinds.append(4)
        srcs.append(-1)
        tgts.append(index[fl.species])
        mults.append(1)
        programs.append(compile_rate(fl.rate, species, model.params))
        patterns.append(classify_rate(fl.rate, species, model.params))

    offs = np.zeros(len(programs) + 1, dtype=np.int64)
    for i, (ops, _) in enumerate(programs):
        offs[i + 1] = offs[i] + ops.size
    code = np.concatenate([ops for ops, _ in programs]) if programs else np.zeros(0, np.int64)
    args = np.concatenate([a for _, a in programs]) if programs else np.zeros(0)
    stack = max((stack_depth(ops) for ops, _ in programs), default=1)
    return {
        "kind": np.asarray(kinds, dtype=np.int64),
        "src": np.asarray(srcs, dtype=np.int64),
        "tgt": np.asarray(tgts, dtype=np.int64),
        "mult": np.asarray(mults, dtype=np.int64),
        "code": code.astype(np.int64),
        "arg": args.astype(np.float64),
        "offs": offs,
        "pat": np.asarray([p[0] for p in patterns], dtype=np.int64),
        "pa": np.asarray([p[1] for p in patterns], dtype=np.float64),
        "pb": np.asarray([p[2] for p in patterns], dtype=np.float64),
        "pspec": np.asarray([p[3] for p in patterns], dtype=np.int64),
        "stack": max(1, stack),
    }


_KERNEL_STATUS = {
    1: "a channel rate evaluated non-finite",
    2: "a non-signed channel produced a negative rate",
}


def run_replication(
    model,
    init,
    config: EngineConfig,
    t_end: float,
    stream: SeededStream,
) -> Trajectory:
    """Run one stochastic replication and sample it on a regular grid.

    `model` is anything with species/transitions/influxes/params (see
    `models.ModelSpec`).  The trajectory's first sample is the initial
    state; metadata records the seed, backend, and engine diagnostics.
    """
    species = tuple(model.species)
    counts0 = _init_counts(model, init)
    grid = _sample_grid(t_end, config.sample_every)
    steps = _steps_per_sample(config)
    effective = [
        tr.rate_policy if tr.rate_policy is not None else config.rate_policy
        for tr in model.transitions
    ]

    if config.backend == BACKEND_TAU_LEAP:
        if any(pol == POLICY_FROZEN for pol in effective):
            raise IncompatiblePolicy(
                "frozen-at-birth rates require the per-agent backend"
            )
        tables = _kernel_tables(model)
        out, clamped, substeps, status = _kernel.run_tau_leap(
            counts0,
            tables["kind"],
            tables["src"],
            tables["tgt"],
            tables["mult"],
            tables["code"],
            tables["arg"],
            tables["offs"],
            tables["pat"],
            tables["pa"],
            tables["pb"],
            tables["pspec"],
            float(config.dt),
            steps,
            grid.size - 1,
            float(config.max_rate_dt),
            tables["stack"],
            splitmix64(stream.seed) & 0xFFFFFFFF,
        )
        if status != 0:
            raise InvalidRate(_KERNEL_STATUS.get(int(status), f"status {status}"))
        meta = {
            "seed": stream.seed,
            "backend": config.backend,
            "clamped_removals": int(clamped),
            "substeps": int(substeps),
        }
        return Trajectory(grid, out, species, mode="abm", metadata=meta)

    engine = PerAgentEngine(model, counts0, config, stream.rng)
    out = np.empty((grid.size, len(species)), dtype=np.int64)
    out[0] = counts0
    for i in range(1, grid.size):
        for _ in range(steps):
            engine.step()
        out[i] = engine.counts()
    meta = {
        "seed": stream.seed,
        "backend": config.backend,
        "dropped_messages": engine.dropped_messages,
        "substeps": engine.substeps,
    }
    return Trajectory(grid, out, species, mode="abm", metadata=meta)


@dataclass(eq=False)
class Ensemble:
    """A batch of replications plus their across-replication mean.

    `trajectories[i]` used seed `seeds[i] = base_seed + i`; the mean is
    computed in ascending replication order and tagged "abm-mean"."""

    trajectories: tuple[Trajectory, ...]
    mean: Trajectory
    seeds: tuple[int, ...]
    base_seed: int

    @property
    def n_reps(self) -> int:
        return len(self.trajectories)


def run_ensemble(
    model,
    init,
    config: EngineConfig,
    t_end: float,
    n_reps: int,
    base_seed: int,
) -> Ensemble:
    """Run `n_reps` replications with seeds base_seed, base_seed+1, ...

    Seeds are attached per replication, so any subset can be reproduced
    alone; results do not depend on execution order.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    seeds = tuple(int(base_seed) + i for i in range(n_reps))
    reps = tuple(
        run_replication(model, init, config, t_end, SeededStream(seed))
        for seed in seeds
    )
    stacked = np.stack([tr.values for tr in reps]).astype(float)
    mean = Trajectory(
        reps[0].times,
        stacked.mean(axis=0),
        reps[0].species,
        mode="abm-mean",
        metadata={
            "n_reps": n_reps,
            "base_seed": int(base_seed),
            "backend": config.backend,
        },
    )
    return Ensemble(reps, mean, seeds, int(base_seed))
