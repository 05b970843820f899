"""Result serialization: CSV series and standalone SVG charts.

Numbers are written so the text round-trips: integral values print as
integers (a trajectory of counts stays "0", "1", "2"), everything else
uses repr, which is the shortest digit string that parses back to the
same float.  No plotting dependency: charts are small hand-assembled
SVG documents.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .core import SimulationError, Trajectory
from .stats import CensusEntry, ComparisonReport


class NoSuchSeries(SimulationError):
    """The requested series name does not exist on this result."""


def format_number(x) -> str:
    """Shortest faithful decimal text for one value."""
    f = float(x)
    if f.is_integer():
        return str(int(f))
    return repr(f)


def trajectory_csv(traj: Trajectory) -> str:
    """Header ``t,<species...>`` then one row per sample."""
    lines = ["t," + ",".join(traj.species)]
    for i in range(traj.n_samples):
        row = [format_number(traj.times[i])]
        row.extend(format_number(v) for v in traj.values[i])
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def parse_trajectory_csv(text: str) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    """Inverse of `trajectory_csv`: (times, values, species)."""
    lines = [ln for ln in text.splitlines() if ln]
    if not lines or not lines[0].startswith("t,"):
        raise NoSuchSeries("not a trajectory CSV (missing 't,...' header)")
    species = tuple(lines[0].split(",")[1:])
    times = np.empty(len(lines) - 1)
    values = np.empty((len(lines) - 1, len(species)))
    for i, line in enumerate(lines[1:]):
        parts = line.split(",")
        times[i] = float(parts[0])
        values[i] = [float(p) for p in parts[1:]]
    return times, values, species


def report_csv(report: ComparisonReport) -> str:
    lines = ["species,u,p_value,decision"]
    for name in report.species:
        decision = "reject" if report.reject[name] else "fail-to-reject"
        lines.append(
            f"{name},{format_number(report.u[name])},"
            f"{format_number(report.p_value[name])},{decision}"
        )
    return "\n".join(lines) + "\n"


def census_csv(census: dict[str, CensusEntry]) -> str:
    lines = ["predicate,count,n_reps,frequency"]
    for name, entry in census.items():
        lines.append(
            f"{name},{entry.count},{entry.n_reps},{format_number(entry.frequency)}"
        )
    return "\n".join(lines) + "\n"


def emit_csv(result, which: str) -> str:
    """One experiment series as CSV text.

    `which` selects: "ode", "abm-mean", "abm-rep-<k>" (0-based
    replication index), "report", or "census".
    """
    if which == "ode":
        return trajectory_csv(result.ode)
    if which == "abm-mean":
        return trajectory_csv(result.ensemble.mean)
    if which == "report":
        return report_csv(result.report)
    if which == "census":
        return census_csv(result.census)
    if which.startswith("abm-rep-"):
        try:
            k = int(which[len("abm-rep-") :])
        except ValueError:
            raise NoSuchSeries(f"bad replication index in {which!r}") from None
        reps = result.ensemble.trajectories
        if not 0 <= k < len(reps):
            raise NoSuchSeries(
                f"replication {k} out of range (have {len(reps)})"
            )
        return trajectory_csv(reps[k])
    raise NoSuchSeries(
        f"unknown series {which!r} (want ode, abm-mean, abm-rep-<k>, "
        f"report, or census)"
    )


# ---------------------------------------------------------------------------
# SVG charts

_PALETTE = ("#2b6cb0", "#c53030", "#2f855a", "#b7791f", "#6b46c1")
_W, _H = 720, 420
_ML, _MR, _MT, _MB = 64, 16, 34, 44  # margins


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    raw = span / max(1, n - 1)
    mag = 10.0 ** np.floor(np.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = np.ceil(lo / step) * step
    out = []
    v = first
    while v <= hi + 1e-9 * span:
        out.append(float(v))
        v += step
    return out or [lo, hi]


def svg_line_chart(
    title: str,
    series: Sequence[tuple[str, np.ndarray, np.ndarray]],
    x_label: str = "day",
    y_label: str = "count",
) -> str:
    """A standalone line chart; `series` is (label, xs, ys) per line."""
    if not series:
        raise ValueError("need at least one series")
    xs_all = np.concatenate([np.asarray(s[1], float) for s in series])
    ys_all = np.concatenate([np.asarray(s[2], float) for s in series])
    x_lo, x_hi = float(xs_all.min()), float(xs_all.max())
    y_lo, y_hi = float(ys_all.min()), float(ys_all.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo = min(0.0, y_lo - pad) if y_lo >= 0 else y_lo - pad
    y_hi = y_hi + pad

    def px(x: float) -> float:
        return _ML + (x - x_lo) / (x_hi - x_lo) * (_W - _ML - _MR)

    def py(y: float) -> float:
        return _H - _MB - (y - y_lo) / (y_hi - y_lo) * (_H - _MT - _MB)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.0f}" y="20" text-anchor="middle" font-size="14">'
        f"{title}</text>",
    ]
    axis = "#444444"
    parts.append(
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" '
        f'stroke="{axis}"/>'
    )
    parts.append(
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="{axis}"/>'
    )
    for t in _ticks(x_lo, x_hi):
        x = px(t)
        parts.append(
            f'<line x1="{x:.1f}" y1="{_H - _MB}" x2="{x:.1f}" y2="{_H - _MB + 4}" '
            f'stroke="{axis}"/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{_H - _MB + 17}" text-anchor="middle">{t:g}</text>'
        )
    for t in _ticks(y_lo, y_hi):
        y = py(t)
        parts.append(
            f'<line x1="{_ML - 4}" y1="{y:.1f}" x2="{_ML}" y2="{y:.1f}" '
            f'stroke="{axis}"/>'
        )
        parts.append(
            f'<text x="{_ML - 7}" y="{y + 4:.1f}" text-anchor="end">{t:g}</text>'
        )
    parts.append(
        f'<text x="{(_ML + _W - _MR) / 2:.0f}" y="{_H - 8}" text-anchor="middle">'
        f"{x_label}</text>"
    )
    parts.append(
        f'<text x="14" y="{(_MT + _H - _MB) / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 14 {(_MT + _H - _MB) / 2:.0f})">{y_label}</text>'
    )
    for i, (label, xs, ys) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(
            f"{px(float(x)):.1f},{py(float(y)):.1f}" for x, y in zip(xs, ys)
        )
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        ly = _MT + 16 * i
        parts.append(
            f'<line x1="{_W - _MR - 130}" y1="{ly}" x2="{_W - _MR - 106}" '
            f'y2="{ly}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(f'<text x="{_W - _MR - 100}" y="{ly + 4}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def comparison_svg(ode: Trajectory, abm_mean: Trajectory, species: str) -> str:
    """Deterministic vs ensemble-mean chart for one species."""
    return svg_line_chart(
        f"{species}: deterministic vs stochastic mean",
        [
            ("deterministic", ode.times, ode.column(species)),
            ("stochastic mean", abm_mean.times, abm_mean.column(species)),
        ],
    )
