"""Paradigm-comparison statistics.

The headline question is always "does the stochastic ensemble mean look
like the deterministic trajectory?", answered per species with a
two-sample Wilcoxon rank-sum test over the sampled values.  Small
tie-free samples get the exact null distribution (computed by the
classic counting recurrence); larger or tied samples use the normal
approximation with midranks, tie-corrected variance, and a continuity
correction.  Failing to reject at the chosen level is the desired
outcome: it means the two paradigms are statistically indistinguishable
on that series.

`extreme_case_census` covers the events a mean cannot show, such as how
many replications lost their tumour entirely.
"""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .core import SimulationError, Trajectory

EXACT_MAX_TOTAL = 20

RankSumResult = namedtuple("RankSumResult", ["u", "p_value", "method"])
CensusEntry = namedtuple("CensusEntry", ["count", "n_reps", "frequency"])


class EmptySample(SimulationError):
    """A rank-sum test needs at least one value in each sample."""


class GridMismatch(SimulationError):
    """Two trajectories cannot be compared because their sampling grids
    or species differ."""


def _midranks(combined: np.ndarray) -> tuple[np.ndarray, bool]:
    """Ranks (1-based, ties averaged) plus a flag for whether ties exist."""
    order = np.argsort(combined, kind="stable")
    ranks = np.empty(combined.size, dtype=float)
    sorted_vals = combined[order]
    has_ties = False
    i = 0
    while i < combined.size:
        j = i
        while j + 1 < combined.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        if j > i:
            has_ties = True
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks, has_ties


def _exact_counts(n1: int, n2: int) -> np.ndarray:
    """Null distribution of the U statistic as integer counts.

    counts[u] is the number of the C(n1+n2, n1) rank assignments giving
    exactly u, built with the recurrence
    c[n1, n2](u) = c[n1-1, n2](u - n2) + c[n1, n2-1](u).
    """
    table = np.zeros((n2 + 1, n1 * n2 + 1), dtype=object)
    table[:, 0] = 1  # n1 = 0 row: only u = 0 is possible
    for i in range(1, n1 + 1):
        new = np.zeros_like(table)
        new[0, 0] = 1
        for j in range(1, n2 + 1):
            shifted = np.zeros(n1 * n2 + 1, dtype=object)
            shifted[j:] = table[j, : n1 * n2 + 1 - j]
            new[j] = shifted + new[j - 1]
        table = new
    return table[n2]


def wilcoxon_rank_sum(x, y, alternative: str = "two-sided") -> RankSumResult:
    """Two-sample Wilcoxon rank-sum (Mann-Whitney) test.

    Returns the U statistic for the first sample and the p-value for the
    requested alternative ("two-sided", "greater": x tends larger,
    "less": x tends smaller).  Samples of combined size up to 20 with no
    tied values use the exact null distribution; everything else uses
    the tie-corrected normal approximation with continuity correction.
    """
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError(f"unknown alternative {alternative!r}")
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size == 0 or y.size == 0:
        raise EmptySample("both samples must be non-empty")
    n1, n2 = x.size, y.size
    combined = np.concatenate([x, y])
    ranks, has_ties = _midranks(combined)
    r1 = float(ranks[:n1].sum())
    u1 = r1 - n1 * (n1 + 1) / 2.0

    if n1 + n2 <= EXACT_MAX_TOTAL and not has_ties:
        counts = _exact_counts(n1, n2)
        total = int(counts.sum())
        u_int = int(round(u1))

        def cdf_le(u: int) -> float:
            if u < 0:
                return 0.0
            u = min(u, n1 * n2)
            return int(counts[: u + 1].sum()) / total

        if alternative == "two-sided":
            u_small = min(u_int, n1 * n2 - u_int)
            p = min(1.0, 2.0 * cdf_le(u_small))
        elif alternative == "greater":
            p = cdf_le(n1 * n2 - u_int)  # P(U >= u1) by symmetry
        else:
            p = cdf_le(u_int)
        return RankSumResult(u1, p, "exact")

    mu = n1 * n2 / 2.0
    n = n1 + n2
    _, tie_counts = np.unique(combined, return_counts=True)
    tie_term = float(((tie_counts**3 - tie_counts)).sum())
    sigma2 = (n1 * n2 / 12.0) * ((n + 1) - tie_term / (n * (n - 1)))
    if sigma2 <= 0:
        return RankSumResult(u1, 1.0, "normal")
    sigma = math.sqrt(sigma2)
    if alternative == "two-sided":
        z = max(0.0, abs(u1 - mu) - 0.5) / sigma
        p = min(1.0, math.erfc(z / math.sqrt(2.0)))
    elif alternative == "greater":
        z = (u1 - mu - 0.5) / sigma
        p = 0.5 * math.erfc(z / math.sqrt(2.0))
    else:
        z = (mu - u1 - 0.5) / sigma
        p = 0.5 * math.erfc(z / math.sqrt(2.0))
    return RankSumResult(u1, p, "normal")


# ---------------------------------------------------------------------------
# Trajectory comparison


@dataclass(eq=False)
class ComparisonReport:
    """Per-species rank-sum verdicts for one ODE-vs-ensemble comparison.

    `reject[s]` is True when the test rejects distributional equality for
    species `s` at level `alpha` (p_value < alpha)."""

    species: tuple[str, ...]
    u: dict[str, float]
    p_value: dict[str, float]
    reject: dict[str, bool]
    alpha: float
    n_x: int
    n_y: int
    metadata: dict = field(default_factory=dict)

    @property
    def n_rejected(self) -> int:
        return sum(self.reject.values())

    @property
    def all_fail_to_reject(self) -> bool:
        return self.n_rejected == 0

    def decision_line(self) -> str:
        n = len(self.species)
        if self.all_fail_to_reject:
            return f"fail to reject ({n}/{n} species)"
        return f"reject ({self.n_rejected}/{n} species)"


def _check_grids(a: Trajectory, b: Trajectory):
    if a.species != b.species:
        raise GridMismatch(f"species differ: {a.species} vs {b.species}")
    if a.times.shape != b.times.shape or np.max(np.abs(a.times - b.times)) > 1e-9:
        raise GridMismatch("sampling grids differ")


def compare_trajectories(
    ode: Trajectory, abm_mean: Trajectory, alpha: float = 0.05
) -> ComparisonReport:
    """Rank-sum comparison of two trajectories on the same grid, one test
    per species.  Pure function of its inputs: no randomness involved."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    _check_grids(ode, abm_mean)
    u: dict[str, float] = {}
    p: dict[str, float] = {}
    reject: dict[str, bool] = {}
    for name in ode.species:
        res = wilcoxon_rank_sum(ode.column(name), abm_mean.column(name))
        u[name] = res.u
        p[name] = res.p_value
        reject[name] = res.p_value < alpha
    return ComparisonReport(
        species=ode.species,
        u=u,
        p_value=p,
        reject=reject,
        alpha=alpha,
        n_x=ode.n_samples,
        n_y=abm_mean.n_samples,
        metadata={"pairing": "mean"},
    )


def compare_ensemble(
    ode: Trajectory, ensemble, alpha: float = 0.05, pairing: str = "mean"
) -> ComparisonReport:
    """Compare an ODE trajectory against a stochastic ensemble.

    pairing "mean" (default) tests the ODE series against the ensemble
    mean series.  pairing "pooled" tests it against every replication's
    samples pooled into one big second sample, which weights frequent
    values more heavily and is much more sensitive to per-replication
    noise.
    """
    if pairing == "mean":
        report = compare_trajectories(ode, ensemble.mean, alpha)
        report.metadata["pairing"] = "mean"
        return report
    if pairing != "pooled":
        raise ValueError(f"unknown pairing {pairing!r}")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    for tr in ensemble.trajectories:
        _check_grids(ode, tr)
    u: dict[str, float] = {}
    p: dict[str, float] = {}
    reject: dict[str, bool] = {}
    pooled_n = 0
    for name in ode.species:
        pooled = np.concatenate(
            [tr.column(name) for tr in ensemble.trajectories]
        )
        pooled_n = pooled.size
        res = wilcoxon_rank_sum(ode.column(name), pooled)
        u[name] = res.u
        p[name] = res.p_value
        reject[name] = res.p_value < alpha
    return ComparisonReport(
        species=ode.species,
        u=u,
        p_value=p,
        reject=reject,
        alpha=alpha,
        n_x=ode.n_samples,
        n_y=pooled_n,
        metadata={"pairing": "pooled"},
    )


# ---------------------------------------------------------------------------
# Extreme-case census


def extreme_case_census(
    ensemble, predicates: Mapping[str, Callable[[Trajectory], bool]]
) -> dict[str, CensusEntry]:
    """Count replications satisfying each named predicate.

    Returns, per predicate, the raw count, the number of replications,
    and the frequency, preserving predicate order."""
    n = len(ensemble.trajectories)
    if n == 0:
        raise EmptySample("ensemble has no replications")
    out: dict[str, CensusEntry] = {}
    for name, pred in predicates.items():
        hits = sum(1 for tr in ensemble.trajectories if pred(tr))
        out[name] = CensusEntry(hits, n, hits / n)
    return out


def species_extinct_by(species: str, day: float) -> Callable[[Trajectory], bool]:
    """True when the species is zero at every sample from `day` onward."""

    def pred(traj: Trajectory) -> bool:
        sel = traj.times >= day - 1e-9
        if not np.any(sel):
            raise ValueError(f"no samples at or after day {day!r}")
        return bool(np.all(traj.column(species)[sel] == 0))

    return pred


def species_max_below(species: str, bound: float) -> Callable[[Trajectory], bool]:
    """True when the species never reaches `bound` in the whole run."""

    def pred(traj: Trajectory) -> bool:
        return bool(np.max(traj.column(species)) < bound)

    return pred


def species_peak_count_at_most(species: str, bound: float) -> Callable[[Trajectory], bool]:
    """True when every sampled count of the species is <= `bound`."""

    def pred(traj: Trajectory) -> bool:
        return bool(np.max(traj.column(species)) <= bound)

    return pred
