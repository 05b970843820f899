"""Deterministic half of the engine: model derivatives and integrators.

Right-hand sides operate on plain state vectors ordered the way each
model lists its species (tumour first).  The workhorse integrator is a
fixed-step classic Runge-Kutta 4 with a sampling grid decoupled from the
step size; a Dormand-Prince 5(4) adaptive integrator with dense output
is provided as an independent cross-check.

Both integrators floor stage states at zero before calling the
derivative function (population models are only defined on the
non-negative orthant) and clamp any negative post-step component to
zero, counting how often that happened in the trajectory metadata.
"""

from __future__ import annotations

import numpy as np

from .core import (
    Case0Params,
    Case1Params,
    Case2Params,
    Case3Params,
    NegativeState,
    NonFiniteState,
    PopulationState,
    SimulationError,
    Trajectory,
)


class StepUnderflow(SimulationError):
    """The adaptive integrator could not meet the tolerance with any
    step size above its floor."""


def _check_state(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise NegativeState(f"derivative requested at negative state {y!r}")
    return y


def rhs_case0(y, p: Case0Params) -> np.ndarray:
    """Power-law growth and decay of a single tumour population."""
    (T,) = _check_state(y)
    return np.array([p.a * T**p.alpha - p.b * T**p.beta])


def rhs_case1(y, p: Case1Params) -> np.ndarray:
    """Tumour/effector kinetics with logistic growth, saturating
    recruitment, contact-driven effector apoptosis, and effector influx."""
    T, E = _check_state(y)
    dT = p.a * T * (1.0 - p.b * T) - p.n * E * T
    dE = p.s + p.p * E * T / (p.g + T) - p.m * E * T - p.d * E
    return np.array([dT, dE])


def rhs_case2(y, p: Case2Params) -> np.ndarray:
    """Tumour/effector/IL-2 kinetics: effectors are recruited by tumour
    presence and boosted by IL-2, IL-2 is produced on effector-tumour
    engagement, and the kill term saturates in tumour size."""
    T, E, I = _check_state(y)
    dT = p.a * T * (1.0 - p.b * T) - p.aa * E * T / (p.g2 + T)
    dE = p.c * T - p.mu2 * E + p.p1 * E * I / (p.g1 + I) + p.s1
    dI = p.p2 * E * T / (p.g3 + T) - p.mu3 * I + p.s2
    return np.array([dT, dE, dI])


def rhs_case3(y, p: Case3Params) -> np.ndarray:
    """Four-population kinetics adding TGF-beta: it suppresses effector
    proliferation, recruitment, and IL-2 production while stimulating
    tumour growth; the tumour secretes it once large enough."""
    T, E, I, S = _check_state(y)
    dT = (
        p.a * T * (1.0 - T / p.K)
        - p.aa * E * T / (p.g2 + T)
        + p.p2 * S * T / (p.g3 + S)
    )
    dE = (
        p.c * T / (1.0 + p.gamma * S)
        - p.mu1 * E
        + E * I / (p.g1 + I) * (p.p1 - p.q1 * S / (p.q2 + S))
    )
    dI = p.p3 * E * T / ((p.g4 + T) * (1.0 + p.alpha * S)) - p.mu2 * I
    dS = p.p4 * T**2 / (p.theta**2 + T**2) - p.mu3 * S
    return np.array([dT, dE, dI, dS])


# ---------------------------------------------------------------------------
# Integration helpers


def _initial_vector(y0) -> tuple[float, np.ndarray]:
    if isinstance(y0, PopulationState):
        return float(y0.time), np.asarray(y0.values, dtype=float).copy()
    arr = np.asarray(y0, dtype=float).copy()
    if arr.ndim != 1:
        raise ValueError(f"initial state must be 1-D, got shape {arr.shape}")
    return 0.0, arr


def _sample_grid(t0: float, t_end: float, sample_every: float) -> np.ndarray:
    if sample_every <= 0:
        raise ValueError("sample_every must be > 0")
    span = t_end - t0
    n = round(span / sample_every)
    if n < 1 or abs(n * sample_every - span) > 1e-9 * max(1.0, abs(span)):
        raise ValueError(
            f"horizon {span!r} is not a multiple of sample interval {sample_every!r}"
        )
    return t0 + sample_every * np.arange(n + 1)


def _default_species(n: int) -> tuple[str, ...]:
    return tuple(f"y{i}" for i in range(n))


def _clamp_nonnegative(y: np.ndarray) -> int:
    """Zero out negative components in place; return how many there were."""
    neg = y < 0
    n = int(neg.sum())
    if n:
        y[neg] = 0.0
    return n


def integrate_fixed(
    rhs,
    y0,
    t_end: float,
    dt: float = 0.01,
    sample_every: float = 1.0,
    species: tuple[str, ...] | None = None,
) -> Trajectory:
    """Integrate dy/dt = rhs(t, y) with classic RK4 at a fixed step.

    `rhs` takes (t, y) and returns a derivative vector.  Sampling happens
    every `sample_every` time units, which must be an integer multiple of
    `dt`; the sample at t0 is the initial state itself.  Negative
    post-step components are clamped to zero and counted under the
    "negative_clamps" metadata key.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    t0, y = _initial_vector(y0)
    grid = _sample_grid(t0, t_end, sample_every)
    steps_per_sample = round(sample_every / dt)
    if steps_per_sample < 1 or abs(steps_per_sample * dt - sample_every) > 1e-9 * sample_every:
        raise ValueError(
            f"sample interval {sample_every!r} is not a multiple of dt {dt!r}"
        )
    if species is None:
        species = _default_species(y.size)

    out = np.empty((grid.size, y.size))
    out[0] = y
    clamps = 0

    def f(t, v):
        return np.asarray(rhs(t, np.maximum(v, 0.0)), dtype=float)

    for i in range(1, grid.size):
        t = grid[i - 1]
        for k in range(steps_per_sample):
            k1 = f(t, y)
            k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
            k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
            k4 = f(t + dt, y + dt * k3)
            y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(y)):
                raise NonFiniteState(
                    f"integration diverged at t={t + dt:g}: {y!r}"
                )
            clamps += _clamp_nonnegative(y)
            t += dt
        out[i] = y

    return Trajectory(
        times=grid,
        values=out,
        species=species,
        mode="ode",
        metadata={"negative_clamps": clamps, "dt": dt, "method": "rk4"},
    )


# Dormand-Prince 5(4) tableau.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
# Coefficients of the order-4 continuous extension (same source as the
# tableau above); stage 2 does not appear.
_DP_D = np.array(
    [
        -12715105075 / 11282082432,
        0.0,
        87487479700 / 32700410799,
        -10690763975 / 1880347072,
        701980252875 / 199316789632,
        -1453857185 / 822651844,
        69997945 / 29380423,
    ]
)

_MIN_STEP = 1e-12


def integrate_adaptive(
    rhs,
    y0,
    t_end: float,
    rel_tol: float = 1e-6,
    abs_tol: float = 1e-9,
    sample_every: float = 1.0,
    species: tuple[str, ...] | None = None,
) -> Trajectory:
    """Integrate with an embedded Dormand-Prince 5(4) pair.

    Step size adapts to keep the scaled error estimate at or below one;
    sample points are filled by the method's order-4 dense output over
    each accepted step, so the output grid matches `integrate_fixed`.
    Raises StepUnderflow if the controller drives the step below 1e-12.
    """
    t0, y = _initial_vector(y0)
    grid = _sample_grid(t0, t_end, sample_every)
    if species is None:
        species = _default_species(y.size)

    def f(t, v):
        dv = np.asarray(rhs(t, np.maximum(v, 0.0)), dtype=float)
        if not np.all(np.isfinite(dv)):
            raise NonFiniteState(f"derivative not finite at t={t:g}: {dv!r}")
        return dv

    out = np.empty((grid.size, y.size))
    out[0] = y
    next_sample = 1
    clamps = 0
    n_steps = 0
    n_rejected = 0

    t = t0
    h = min(sample_every, (t_end - t0) / 10.0, 0.1)
    f0 = f(t, y)
    k = np.empty((7, y.size))

    while t < t_end and next_sample < grid.size:
        h = min(h, t_end - t)
        if h < _MIN_STEP:
            raise StepUnderflow(f"step size {h:g} below floor at t={t:g}")
        k[0] = f0
        for s in range(1, 7):
            k[s] = f(t + _DP_C[s] * h, y + h * (_DP_A[s] @ k[:s]))
        y5 = y + h * (_DP_B5 @ k)
        y4 = y + h * (_DP_B4 @ k)
        scale = abs_tol + rel_tol * np.maximum(np.abs(y), np.abs(y5))
        err = float(np.sqrt(np.mean(((y5 - y4) / scale) ** 2)))
        if err <= 1.0:
            t_new = t + h
            f_new = k[6]  # FSAL: last stage is f(t_new, y5)
            # Dense-output polynomial pieces for this step.
            ydiff = y5 - y
            bspl = h * k[0] - ydiff
            r4 = ydiff - h * f_new - bspl
            r5 = h * (_DP_D @ k)
            while next_sample < grid.size and grid[next_sample] <= t_new + 1e-12:
                ts = min(grid[next_sample], t_new)
                theta = (ts - t) / h
                ys = y + theta * (ydiff + (1 - theta) * (bspl + theta * (r4 + (1 - theta) * r5)))
                clamps += _clamp_nonnegative(ys)
                out[next_sample] = ys
                next_sample += 1
            y = y5
            clamps += _clamp_nonnegative(y)
            f0 = f(t_new, y) if np.any(y != y5) else f_new
            t = t_new
            n_steps += 1
            factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err**-0.2))
            h *= factor
        else:
            n_rejected += 1
            h *= max(0.2, 0.9 * err**-0.2)

    return Trajectory(
        times=grid,
        values=out,
        species=species,
        mode="ode",
        metadata={
            "negative_clamps": clamps,
            "method": "dopri5",
            "accepted_steps": n_steps,
            "rejected_steps": n_rejected,
        },
    )
