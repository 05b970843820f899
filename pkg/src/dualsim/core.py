"""Shared value types for the dual-paradigm simulation engine.

Species labels, parameter records for the four tumour-immune models,
immutable trajectory containers, and the seeded random-stream wrapper
used by every stochastic component.  Everything here is deliberately
dependency-light so the ODE and agent-based halves of the package can
share one vocabulary.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from collections.abc import Mapping

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF

# Canonical species labels.  Model state vectors are always ordered the
# way the owning ModelSpec lists its species.
TUMOUR = "Tumour"
EFFECTOR = "Effector"
IL2 = "IL2"
TGFBETA = "TGFBeta"


class SimulationError(Exception):
    """Base class for every error raised by this package."""


class NegativeParameter(SimulationError):
    """A model parameter that must be non-negative was negative."""


class ZeroDenominator(SimulationError):
    """A parameter that must be strictly positive (it appears in a
    denominator or as an exponent base scale) was zero."""


class NegativeState(SimulationError):
    """A state vector contained a negative component where populations
    are required."""


class NonFiniteState(SimulationError):
    """A state or derivative evaluation produced NaN or infinity."""


# ---------------------------------------------------------------------------
# Parameter records


@dataclass(frozen=True)
class Case0Params:
    """Power-law growth/decay warm-up model: dT/dt = a*T^alpha - b*T^beta."""

    a: float
    alpha: float
    b: float
    beta: float


@dataclass(frozen=True)
class Case1Params:
    """Two-population tumour/effector model (Kuznetsov-style kinetics).

    dT/dt = a*T*(1 - b*T) - n*E*T
    dE/dt = s + p*E*T/(g + T) - m*E*T - d*E
    """

    a: float
    b: float
    n: float
    p: float
    g: float
    m: float
    d: float
    s: float


@dataclass(frozen=True)
class Case2Params:
    """Three-population tumour/effector/IL-2 model (Kirschner-Panetta
    kinetics).

    dT/dt = a*T*(1 - b*T) - aa*E*T/(g2 + T)
    dE/dt = c*T - mu2*E + p1*E*I/(g1 + I) + s1
    dI/dt = p2*E*T/(g3 + T) - mu3*I + s2
    """

    a: float
    b: float
    c: float
    aa: float
    g1: float
    g2: float
    g3: float
    mu2: float
    mu3: float
    p1: float
    p2: float
    s1: float
    s2: float


@dataclass(frozen=True)
class Case3Params:
    """Four-population model adding TGF-beta immunosuppression (Arciero
    kinetics).

    dE/dt = c*T/(1 + gamma*S) - mu1*E + E*I/(g1 + I)*(p1 - q1*S/(q2 + S))
    dT/dt = a*T*(1 - T/K) - aa*E*T/(g2 + T) + p2*S*T/(g3 + S)
    dI/dt = p3*E*T/((g4 + T)*(1 + alpha*S)) - mu2*I
    dS/dt = p4*T^2/(theta^2 + T^2) - mu3*S
    """

    a: float
    K: float
    aa: float
    c: float
    gamma: float
    alpha: float
    p1: float
    q1: float
    q2: float
    g1: float
    g2: float
    g3: float
    g4: float
    p2: float
    p3: float
    p4: float
    theta: float
    mu1: float
    mu2: float
    mu3: float


Params = Case0Params | Case1Params | Case2Params | Case3Params

# Fields that must be strictly positive, per parameter record.  All other
# fields only need to be non-negative.
_STRICT_POSITIVE: dict[type, tuple[str, ...]] = {
    Case0Params: ("alpha", "beta"),
    Case1Params: ("g",),
    Case2Params: ("g1", "g2", "g3"),
    Case3Params: ("K", "g1", "g2", "g3", "g4", "q2", "theta"),
}


def validate_params(params):
    """Check sign constraints on a parameter record and return it.

    Raises NegativeParameter for any negative field and ZeroDenominator
    for a zero in a field that must be strictly positive (saturation
    constants, carrying capacity, switch scale, power-law exponents).
    """
    strict = _STRICT_POSITIVE.get(type(params))
    if strict is None:
        raise TypeError(f"not a parameter record: {type(params).__name__}")
    for f in dataclasses.fields(params):
        value = getattr(params, f.name)
        if not np.isfinite(value):
            raise NonFiniteState(f"parameter {f.name} is not finite: {value!r}")
        if value < 0:
            raise NegativeParameter(f"parameter {f.name} must be >= 0, got {value!r}")
        if value == 0 and f.name in strict:
            raise ZeroDenominator(f"parameter {f.name} must be > 0, got 0")
    return params


def param_value(params, name: str) -> float:
    """Look up a parameter by name on a record or a plain mapping."""
    if isinstance(params, Mapping):
        return float(params[name])
    return float(getattr(params, name))


def param_names(params) -> tuple[str, ...]:
    """Names available on a parameter record or mapping."""
    if isinstance(params, Mapping):
        return tuple(params.keys())
    return tuple(f.name for f in dataclasses.fields(params))


# ---------------------------------------------------------------------------
# State and trajectory containers


@dataclass(frozen=True)
class PopulationState:
    """A point-in-time snapshot: a time stamp plus one value per species.

    The value array is frozen at construction.  Ordering follows the
    owning model's species tuple.
    """

    time: float
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 1:
            raise ValueError(f"state values must be 1-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteState(f"state contains non-finite values: {arr!r}")
        if np.any(arr < 0):
            raise NegativeState(f"state contains negative values: {arr!r}")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.size


@dataclass(eq=False)
class Trajectory:
    """A sampled time series for one run (or one ensemble mean).

    `values` has shape (n_samples, n_species) with columns ordered like
    `species`.  `mode` tags the provenance: "ode" for a deterministic
    integration, "abm" for a single stochastic replication, "abm-mean"
    for an across-replication average (which is generally non-integral
    even though single replications are integer-valued).
    """

    times: np.ndarray
    values: np.ndarray
    species: tuple[str, ...]
    mode: str
    metadata: dict = field(default_factory=dict)

    MODES = ("ode", "abm", "abm-mean")

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values)
        self.species = tuple(self.species)
        if self.mode not in self.MODES:
            raise ValueError(f"unknown trajectory mode {self.mode!r}")
        if self.times.ndim != 1:
            raise ValueError("times must be 1-D")
        if self.values.shape != (self.times.size, len(self.species)):
            raise ValueError(
                f"values shape {self.values.shape} does not match "
                f"{self.times.size} samples x {len(self.species)} species"
            )
        if self.times.size >= 2 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")

    @property
    def n_samples(self) -> int:
        return self.times.size

    def column(self, species: str) -> np.ndarray:
        """The sampled series for one species."""
        try:
            idx = self.species.index(species)
        except ValueError:
            raise KeyError(f"no species {species!r} in {self.species}") from None
        return self.values[:, idx]

    def final(self) -> PopulationState:
        return PopulationState(float(self.times[-1]), np.asarray(self.values[-1], dtype=float))


# ---------------------------------------------------------------------------
# Seeding


def splitmix64(x: int) -> int:
    """One round of the splitmix64 mixing function (finalizer only).

    Used to decorrelate seeds that differ in few bits before they reach
    a generator, and to derive per-scenario streams.
    """
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return (x ^ (x >> 31)) & MASK64


def fnv1a64(text: str) -> int:
    """64-bit FNV-1a hash of a string, for stable name-keyed seeds."""
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & MASK64
    return h


def derive_seed(base_seed: int, key: str) -> int:
    """A child seed that depends on the base seed and a name, not on any
    list position, so reordering a batch never reshuffles streams."""
    return (int(base_seed) ^ splitmix64(fnv1a64(key))) & MASK64


class SeededStream:
    """A named random stream: one 64-bit seed, one PCG64 generator.

    Every stochastic run takes a SeededStream so the seed that produced
    it stays attached to the results.
    """

    __slots__ = ("seed", "rng")

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self.rng = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, key: str) -> "SeededStream":
        return SeededStream(derive_seed(self.seed, key))

    def __repr__(self) -> str:
        return f"SeededStream(seed={self.seed})"
