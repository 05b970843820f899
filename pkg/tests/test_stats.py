"""Rank-sum test, trajectory comparison, and the extreme-case census."""

import itertools
import math
from types import SimpleNamespace

import numpy as np
import pytest
from scipy import stats as ss

from dualsim.abm import EngineConfig, RemoveSelf, TransitionSpec, run_ensemble
from dualsim.core import Trajectory
from dualsim.rates import const
from dualsim.stats import (
    EXACT_MAX_TOTAL,
    EmptySample,
    GridMismatch,
    compare_ensemble,
    compare_trajectories,
    extreme_case_census,
    species_extinct_by,
    species_max_below,
    species_peak_count_at_most,
    wilcoxon_rank_sum,
)
from dualsim.stats import _midranks


def test_midranks():
    ranks, ties = _midranks(np.array([3.0, 1.0, 2.0]))
    np.testing.assert_array_equal(ranks, [3.0, 1.0, 2.0])
    assert not ties
    ranks, ties = _midranks(np.array([1.0, 2.0, 2.0, 3.0]))
    np.testing.assert_array_equal(ranks, [1.0, 2.5, 2.5, 4.0])
    assert ties


def test_exact_separated_samples():
    res = wilcoxon_rank_sum([1, 2, 3], [4, 5, 6])
    assert res.method == "exact"
    assert res.u == 0.0
    assert res.p_value == pytest.approx(0.1)
    assert wilcoxon_rank_sum([1, 2, 3], [4, 5, 6], "less").p_value == pytest.approx(0.05)
    assert wilcoxon_rank_sum([1, 2, 3], [4, 5, 6], "greater").p_value == pytest.approx(1.0)


def test_exact_agrees_with_brute_enumeration():
    # Enumerate every split of the combined sample and count U values at
    # or below the observed one; sizes here keep that cheap.
    x = [0.5, 2.7, 3.1]
    y = [1.2, 2.0, 4.4, 5.9]
    res = wilcoxon_rank_sum(x, y)
    combined = sorted(x + y)
    n1 = len(x)
    u_obs = sum(1 for xi in x for yj in y if xi > yj)
    us = []
    for pick in itertools.combinations(range(len(combined)), n1):
        chosen = [combined[i] for i in pick]
        rest = [combined[i] for i in range(len(combined)) if i not in pick]
        us.append(sum(1 for xi in chosen for yj in rest if xi > yj))
    u_small = min(u_obs, n1 * len(y) - u_obs)
    expect = min(1.0, 2.0 * sum(1 for u in us if u <= u_small) / len(us))
    assert res.u == u_obs
    assert res.p_value == pytest.approx(expect, abs=1e-15)


def test_exact_matches_scipy():
    rng = np.random.default_rng(42)
    for _ in range(8):
        x = rng.permutation(np.arange(0, 40, 1.7))[:6]
        y = rng.permutation(np.arange(0.3, 40, 1.9))[:8]
        for alt in ("two-sided", "less", "greater"):
            mine = wilcoxon_rank_sum(x, y, alt)
            assert mine.method == "exact"
            sp = ss.mannwhitneyu(x, y, alternative=alt, method="exact")
            assert mine.u == sp.statistic
            assert mine.p_value == pytest.approx(sp.pvalue, abs=1e-12)


def test_normal_matches_scipy():
    rng = np.random.default_rng(7)
    for _ in range(6):
        x = rng.integers(0, 12, size=25).astype(float)
        y = rng.integers(2, 14, size=30).astype(float)
        for alt in ("two-sided", "less", "greater"):
            mine = wilcoxon_rank_sum(x, y, alt)
            assert mine.method == "normal"
            sp = ss.mannwhitneyu(
                x, y, alternative=alt, method="asymptotic", use_continuity=True
            )
            assert mine.p_value == pytest.approx(sp.pvalue, abs=1e-12)


def test_ties_force_normal_method():
    assert wilcoxon_rank_sum([1, 2, 2], [2, 3, 4]).method == "normal"
    # 21 tie-free values exceed the exact-enumeration budget.
    x = np.arange(10.0)
    y = np.arange(10.25, 21.25)
    assert x.size + y.size == EXACT_MAX_TOTAL + 1
    assert wilcoxon_rank_sum(x, y).method == "normal"


def test_symmetry_in_sample_order():
    x = [3.0, 9.5, 1.2, 7.7]
    y = [4.4, 0.1, 8.8, 6.6, 2.2]
    a = wilcoxon_rank_sum(x, y)
    b = wilcoxon_rank_sum(y, x)
    assert a.p_value == pytest.approx(b.p_value, abs=1e-15)
    assert a.u + b.u == len(x) * len(y)


def test_one_sided_relationships():
    x = [1.1, 5.3, 2.2, 8.1]
    y = [0.7, 3.3, 6.6, 9.9, 4.4]
    two = wilcoxon_rank_sum(x, y).p_value
    less = wilcoxon_rank_sum(x, y, "less").p_value
    greater = wilcoxon_rank_sum(x, y, "greater").p_value
    assert two == pytest.approx(min(1.0, 2.0 * min(less, greater)), abs=1e-12)


def test_identical_samples_not_rejected():
    x = np.arange(30.0)
    res = wilcoxon_rank_sum(x, x.copy())
    assert res.p_value >= 0.99
    res = wilcoxon_rank_sum(np.full(10, 5.0), np.full(12, 5.0))
    assert res.p_value == 1.0  # zero variance after tie correction


def test_flat_zero_vs_flat_hundred():
    res = wilcoxon_rank_sum(np.zeros(601), np.full(601, 100.0))
    assert res.p_value < 1e-6


def test_shift_monotonicity():
    rng = np.random.default_rng(3)
    x = rng.normal(0.0, 1.0, size=8)
    y = rng.normal(0.0, 1.0, size=8)
    shifts = [0.0, 0.37, 1.234, 2.71, 5.5]
    ps = [wilcoxon_rank_sum(x + s, y, "greater").p_value for s in shifts]
    assert all(b <= a + 1e-12 for a, b in zip(ps, ps[1:]))


def test_exact_and_normal_agree_to_two_percent():
    # Re-derive the normal approximation by hand and compare it with the
    # exact p at the largest sizes where the exact path is taken.
    rng = np.random.default_rng(11)
    for shift in (0.0, 0.8, 1.6, 3.0):
        x = rng.normal(shift, 1.0, size=10)
        y = rng.normal(0.0, 1.0, size=10)
        res = wilcoxon_rank_sum(x, y)
        assert res.method == "exact"
        n1 = n2 = 10
        mu = n1 * n2 / 2.0
        sigma = math.sqrt(n1 * n2 * (n1 + n2 + 1) / 12.0)
        z = max(0.0, abs(res.u - mu) - 0.5) / sigma
        p_normal = min(1.0, math.erfc(z / math.sqrt(2.0)))
        assert abs(res.p_value - p_normal) <= 0.02


def test_input_validation():
    with pytest.raises(EmptySample):
        wilcoxon_rank_sum([], [1.0])
    with pytest.raises(EmptySample):
        wilcoxon_rank_sum([1.0], [])
    with pytest.raises(ValueError):
        wilcoxon_rank_sum([1.0], [2.0], alternative="different")


# ---------------------------------------------------------------------------
# Trajectory comparison


def _traj(values, species=("Tumour",), mode="ode"):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    return Trajectory(np.arange(values.shape[0], dtype=float), values, species, mode)


def test_compare_identical_series():
    series = np.linspace(5.0, 40.0, 31)
    report = compare_trajectories(_traj(series), _traj(series, mode="abm-mean"))
    assert report.all_fail_to_reject
    assert report.p_value["Tumour"] == 1.0
    assert report.decision_line() == "fail to reject (1/1 species)"
    assert report.n_x == report.n_y == 31


def test_compare_disjoint_series():
    report = compare_trajectories(
        _traj(np.zeros(601)), _traj(np.full(601, 100.0), mode="abm-mean")
    )
    assert report.reject["Tumour"]
    assert report.p_value["Tumour"] < 1e-6
    assert report.n_rejected == 1
    assert report.decision_line() == "reject (1/1 species)"


def test_compare_mixed_verdicts():
    ode = Trajectory(
        np.arange(31.0),
        np.column_stack([np.linspace(0, 30, 31), np.zeros(31)]),
        ("A", "B"),
        "ode",
    )
    abm = Trajectory(
        np.arange(31.0),
        np.column_stack([np.linspace(0, 30, 31) + 0.01, np.full(31, 50.0)]),
        ("A", "B"),
        "abm-mean",
    )
    report = compare_trajectories(ode, abm)
    assert not report.reject["A"]
    assert report.reject["B"]
    assert report.decision_line() == "reject (1/2 species)"


def test_decisions_follow_alpha():
    x = np.linspace(0, 10, 25)
    y = x + 1.1
    loose = compare_trajectories(_traj(x), _traj(y, mode="abm-mean"), alpha=0.05)
    strict = compare_trajectories(_traj(x), _traj(y, mode="abm-mean"), alpha=1e-12)
    for name in ("Tumour",):
        assert loose.reject[name] == (loose.p_value[name] < 0.05)
        assert strict.reject[name] == (strict.p_value[name] < 1e-12)
    assert loose.p_value["Tumour"] == strict.p_value["Tumour"]


def test_compare_grid_checks():
    a = _traj(np.zeros(4))
    with pytest.raises(GridMismatch):
        compare_trajectories(a, _traj(np.zeros(5), mode="abm-mean"))
    with pytest.raises(GridMismatch):
        compare_trajectories(a, _traj(np.zeros(4), species=("Other",), mode="abm-mean"))
    with pytest.raises(ValueError):
        compare_trajectories(a, _traj(np.zeros(4), mode="abm-mean"), alpha=0.0)


def _death_model():
    return SimpleNamespace(
        species=("X",),
        transitions=(TransitionSpec("death", "X", const(0.5), RemoveSelf()),),
        influxes=(),
        params={},
    )


def test_compare_ensemble_pairings():
    model = _death_model()
    ens = run_ensemble(model, np.array([400]), EngineConfig(), 10.0, 12, base_seed=55)
    ode = _traj(400.0 * np.exp(-0.5 * np.arange(11.0)), species=("X",))
    mean_report = compare_ensemble(ode, ens)
    assert mean_report.metadata["pairing"] == "mean"
    assert mean_report.n_y == 11
    direct = compare_trajectories(ode, ens.mean)
    assert mean_report.p_value == direct.p_value
    pooled = compare_ensemble(ode, ens, pairing="pooled")
    assert pooled.metadata["pairing"] == "pooled"
    assert pooled.n_y == 12 * 11
    with pytest.raises(ValueError):
        compare_ensemble(ode, ens, pairing="zipped")


# ---------------------------------------------------------------------------
# Census


def _census_ensemble():
    times = np.arange(7.0)
    rows = {
        # extinct from day 3 onward
        "gone": [9, 4, 1, 0, 0, 0, 0],
        # touches zero at day 4 but comes back
        "lazarus": [9, 5, 2, 1, 0, 1, 2],
        # never reaches zero
        "alive": [9, 8, 8, 7, 7, 6, 5],
    }
    trajs = tuple(
        Trajectory(times, np.array(v, dtype=float)[:, None], ("Tumour",), "abm")
        for v in rows.values()
    )
    return SimpleNamespace(trajectories=trajs)


def test_census_counts_and_frequencies():
    ens = _census_ensemble()
    out = extreme_case_census(
        ens,
        {
            "extinct_by_3": species_extinct_by("Tumour", 3.0),
            "extinct_by_5": species_extinct_by("Tumour", 5.0),
            "small": species_max_below("Tumour", 9.0),
        },
    )
    assert list(out) == ["extinct_by_3", "extinct_by_5", "small"]
    assert out["extinct_by_3"].count == 1  # only "gone"
    assert out["extinct_by_5"].count == 1  # "lazarus" resurrected
    assert out["small"].count == 0  # every run starts at 9
    assert out["extinct_by_3"].n_reps == 3
    assert out["extinct_by_3"].frequency == pytest.approx(1 / 3)


def test_census_bound_predicates():
    ens = _census_ensemble()
    out = extreme_case_census(
        ens,
        {
            "below": species_max_below("Tumour", 9.5),
            "at_most_nine": species_peak_count_at_most("Tumour", 9.0),
            "at_most_eight": species_peak_count_at_most("Tumour", 8.0),
        },
    )
    assert out["below"].count == 3
    assert out["at_most_nine"].count == 3  # inclusive bound
    assert out["at_most_eight"].count == 0


def test_census_validation():
    with pytest.raises(EmptySample):
        extreme_case_census(SimpleNamespace(trajectories=()), {})
    pred = species_extinct_by("Tumour", 99.0)
    with pytest.raises(ValueError):
        pred(_census_ensemble().trajectories[0])
