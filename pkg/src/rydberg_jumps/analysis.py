"""Bright/dark segmentation of trajectory records and jump statistics.

An atom is dark at a sample when its Rydberg population exceeds a threshold.
Sample ``k`` stands for the half-open interval ``[t_k, t_k + dt_s)``, so the
intervals of one atom tile ``[t_0, t_last + dt_s)``.

Rate estimators count exits and divide by the time spent in the source label,
including censored intervals at the run boundaries (the maximum-likelihood
estimate for exponential dwell times). They are additive over records.
Dwell-time histograms use completed intervals only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
import scipy.stats

from .errors import ConfigError, InsufficientDataError
from .model import LatticeSpec
from .rates import SurvivalCurve
from .trajectory import TrajectoryRecord

DEFAULT_THRESHOLD = 0.98
DEFAULT_PATTERNS = ("DBB->DDB", "DDB->DBB", "DBD->DDD")
MIN_FIT_SAMPLES = 50


@dataclass
class PeriodSegmentation:
    """Per-atom ``(start, end, label)`` intervals plus the per-sample dark mask."""

    intervals: list[list[tuple[float, float, str]]]
    dark: np.ndarray
    sample_times: np.ndarray
    sample_interval: float
    threshold: float
    aligned: bool = False

    @property
    def n_atoms(self) -> int:
        return self.dark.shape[1]

    @property
    def span(self) -> tuple[float, float]:
        return float(self.sample_times[0]), float(self.sample_times[-1] + self.sample_interval)


def _runs(mask: np.ndarray):
    """Start/stop indices of runs of equal values in a 1D array."""
    change = np.flatnonzero(mask[1:] != mask[:-1]) + 1
    starts = np.concatenate([[0], change])
    stops = np.concatenate([change, [mask.size]])
    return starts, stops


def _intervals_from_mask(dark: np.ndarray, t0: float, dts: float):
    out = []
    for i in range(dark.shape[1]):
        starts, stops = _runs(dark[:, i])
        out.append(
            [
                (t0 + a * dts, t0 + b * dts, "D" if dark[a, i] else "B")
                for a, b in zip(starts.tolist(), stops.tolist())
            ]
        )
    return out


def classify_periods(record: TrajectoryRecord, threshold: float = DEFAULT_THRESHOLD) -> PeriodSegmentation:
    """Label each atom dark while its Rydberg population exceeds ``threshold``."""
    if not 0 < threshold < 1:
        raise ConfigError("threshold must lie in (0, 1)")
    pops = np.asarray(record.populations)
    if pops.ndim != 2 or pops.shape[0] == 0:
        raise InsufficientDataError("record has no population samples")
    times = np.asarray(record.sample_times, dtype=np.float64)
    dts = float(record.settings.get("sample_interval", times[1] - times[0] if times.size > 1 else 1.0))
    dark = pops > threshold
    return PeriodSegmentation(
        intervals=_intervals_from_mask(dark, float(times[0]), dts),
        dark=dark,
        sample_times=times,
        sample_interval=dts,
        threshold=float(threshold),
    )


def align_to_emissions(seg: PeriodSegmentation, record: TrajectoryRecord) -> PeriodSegmentation:
    """Move dark-period boundaries onto the emissions that delimit them.

    A dark period physically starts at the atom's last emission before the
    population crossed the threshold and ends at its next emission. Bright
    intervals that contain no emission of the atom are absorbed into the
    surrounding dark period. The dark mask is re-evaluated at the sample times.
    """
    t_lo, t_hi = seg.span
    dts = seg.sample_interval
    new_intervals = []
    dark = np.zeros_like(seg.dark)
    for i, ivs in enumerate(seg.intervals):
        em = np.sort(record.emission_times[record.emission_atoms == i])
        periods = []
        for start, end, label in ivs:
            if label != "D":
                continue
            k = np.searchsorted(em, start, side="left")
            s = em[k - 1] if k > 0 and start > t_lo else start
            k = np.searchsorted(em, end - dts, side="left")
            e = em[k] if k < em.size else end
            e = min(max(e, s), t_hi)
            if periods and s <= periods[-1][1]:
                periods[-1][1] = max(periods[-1][1], e)
            else:
                periods.append([s, e])
        cur = t_lo
        out = []
        for s, e in periods:
            if s > cur:
                out.append((cur, float(s), "B"))
            if e > s:
                out.append((float(s), float(e), "D"))
            cur = max(cur, e)
        if cur < t_hi:
            out.append((cur, t_hi, "B"))
        # merge equal neighbours left by zero-length pieces
        merged: list[tuple[float, float, str]] = []
        for iv in out:
            if merged and merged[-1][2] == iv[2]:
                merged[-1] = (merged[-1][0], iv[1], iv[2])
            else:
                merged.append(iv)
        new_intervals.append(merged)
        for s, e, label in merged:
            if label == "D":
                dark[(seg.sample_times >= s) & (seg.sample_times < e), i] = True
    return replace(seg, intervals=new_intervals, dark=dark, aligned=True)


# ---------------------------------------------------------------------------
# single-atom rates


@dataclass(frozen=True)
class SingleRates:
    b_to_d: float
    b_to_d_err: float
    d_to_b: float
    d_to_b_err: float
    n_b_exits: int
    n_d_exits: int
    time_b: float
    time_d: float


def _as_list(segs) -> list[PeriodSegmentation]:
    return [segs] if isinstance(segs, PeriodSegmentation) else list(segs)


def estimate_single_rates(segs, atoms: Sequence[int] | None = None) -> SingleRates:
    """Pooled ``B->D`` and ``D->B`` rates: exits divided by time in the label.

    A label that is never left gets ``nan``.
    """
    counts = {"B": 0, "D": 0}
    times = {"B": 0.0, "D": 0.0}
    for seg in _as_list(segs):
        for i in range(seg.n_atoms) if atoms is None else atoms:
            ivs = seg.intervals[i]
            for k, (s, e, label) in enumerate(ivs):
                times[label] += e - s
                if k + 1 < len(ivs):
                    counts[label] += 1
    if counts["B"] == 0 and counts["D"] == 0:
        raise InsufficientDataError("no bright/dark transitions observed")

    def rate(label):
        if counts[label] == 0:
            return float("nan"), float("nan")
        r = counts[label] / times[label]
        return float(r), float(r / np.sqrt(counts[label]))

    bd, bd_err = rate("B")
    db, db_err = rate("D")
    return SingleRates(
        b_to_d=bd,
        b_to_d_err=bd_err,
        d_to_b=db,
        d_to_b_err=db_err,
        n_b_exits=counts["B"],
        n_d_exits=counts["D"],
        time_b=float(times["B"]),
        time_d=float(times["D"]),
    )


def completed_durations(segs, label: str, atoms: Sequence[int] | None = None) -> np.ndarray:
    """Lengths of all ``label`` intervals that are not truncated by the run boundaries."""
    out = []
    for seg in _as_list(segs):
        for i in range(seg.n_atoms) if atoms is None else atoms:
            ivs = seg.intervals[i]
            out += [e - s for s, e, lab in ivs[1:-1] if lab == label]
    return np.asarray(out, dtype=np.float64)


# ---------------------------------------------------------------------------
# dwell histograms


@dataclass
class DwellHistogram:
    label: str
    edges: np.ndarray
    counts: np.ndarray
    n: int
    rate: float | None = None
    rate_err: float | None = None
    chi2_per_dof: float | None = None
    poor_fit: bool | None = None


def dwell_time_histogram(durations_or_segs, label: str = "D", bins=20, poor_fit_threshold: float = 3.0) -> DwellHistogram:
    """Histogram of completed dwell times with a maximum-likelihood exponential fit.

    The fit (rate, standard error, chi-square per degree of freedom with
    adjacent bins merged to at least five expected counts) is reported only
    with 50 or more intervals.
    """
    if isinstance(durations_or_segs, PeriodSegmentation) or (
        isinstance(durations_or_segs, (list, tuple))
        and durations_or_segs
        and isinstance(durations_or_segs[0], PeriodSegmentation)
    ):
        d = completed_durations(durations_or_segs, label)
    else:
        d = np.asarray(durations_or_segs, dtype=np.float64)
    if d.size == 0:
        raise InsufficientDataError(f"no completed {label} intervals")
    if np.isscalar(bins):
        edges = np.linspace(0.0, d.max() * (1 + 1e-9), int(bins) + 1)
    else:
        edges = np.asarray(bins, dtype=np.float64)
    counts, edges = np.histogram(d, bins=edges)
    hist = DwellHistogram(label=label, edges=edges, counts=counts, n=int(d.size))
    if d.size < MIN_FIT_SAMPLES:
        return hist
    rate = d.size / d.sum()
    cdf = 1.0 - np.exp(-rate * edges)
    # bins plus the mass beyond the last edge, merged left to right until
    # every group expects at least five counts
    expected = np.append(d.size * np.diff(cdf), d.size * (1.0 - cdf[-1]))
    observed = np.append(counts, np.count_nonzero(d >= edges[-1]))
    groups, obs_acc, exp_acc = [], 0.0, 0.0
    for o, e in zip(observed, expected):
        obs_acc += o
        exp_acc += e
        if exp_acc >= 5:
            groups.append((obs_acc, exp_acc))
            obs_acc = exp_acc = 0.0
    if groups and exp_acc > 0:
        o, e = groups.pop()
        groups.append((o + obs_acc, e + exp_acc))
    dof = max(len(groups) - 2, 1)
    chi2 = float(sum((o - e) ** 2 / e for o, e in groups))
    hist.rate = float(rate)
    hist.rate_err = float(rate / np.sqrt(d.size))
    hist.chi2_per_dof = chi2 / dof
    hist.poor_fit = bool(hist.chi2_per_dof > poor_fit_threshold)
    return hist


# ---------------------------------------------------------------------------
# joint states of a few atoms


def joint_states(seg: PeriodSegmentation) -> np.ndarray:
    """Per-sample pattern strings such as ``"BD"`` (atom 0 first)."""
    chars = np.where(seg.dark, "D", "B")
    return np.array(["".join(row) for row in chars])


def joint_occupancy(seg: PeriodSegmentation, t_min: float = 0.0) -> dict[str, float]:
    """Fraction of sampled time spent in each joint pattern at ``t >= t_min``."""
    states = joint_states(seg)[seg.sample_times >= t_min]
    if states.size == 0:
        raise InsufficientDataError("no samples after t_min")
    labels, counts = np.unique(states, return_counts=True)
    return {str(k): float(v) / states.size for k, v in zip(labels, counts)}


def joint_dwell_times(seg: PeriodSegmentation) -> dict[str, np.ndarray]:
    """Completed dwell times of each joint pattern, on the sample grid."""
    states = joint_states(seg)
    codes = np.unique(states, return_inverse=True)[1]
    starts, stops = _runs(codes)
    out: dict[str, list[float]] = {}
    for a, b in zip(starts[1:-1], stops[1:-1]):
        out.setdefault(str(states[a]), []).append((b - a) * seg.sample_interval)
    return {k: np.asarray(v) for k, v in out.items()}


# ---------------------------------------------------------------------------
# local pattern transitions


@dataclass
class PatternTransitionCounts:
    """Event counts and time at risk for local three-site transitions."""

    events: dict[str, int]
    time_at_risk: dict[str, float]

    def rate(self, pattern: str) -> float:
        t = self.time_at_risk[pattern]
        return self.events[pattern] / t if t > 0 else float("nan")

    def rate_err(self, pattern: str) -> float:
        t = self.time_at_risk[pattern]
        return np.sqrt(self.events[pattern]) / t if t > 0 else float("nan")

    def z_score(self, pattern: str, predicted_rate: float) -> float:
        """Poisson z-score of the observed count against ``predicted_rate``."""
        expected = predicted_rate * self.time_at_risk[pattern]
        if expected <= 0:
            return 0.0 if self.events[pattern] == 0 else float("inf")
        return (self.events[pattern] - expected) / np.sqrt(expected)


def _parse_pattern(pattern: str) -> tuple[str, str]:
    try:
        src, dst = (p.strip() for p in pattern.split("->"))
    except ValueError:
        raise ConfigError(f"pattern must look like 'DBB->DDB', got {pattern!r}") from None
    if len(src) != 3 or len(dst) != 3 or set(src + dst) - {"B", "D"}:
        raise ConfigError(f"patterns must be three-site B/D strings, got {pattern!r}")
    if src[0] != dst[0] or src[2] != dst[2] or src[1] == dst[1]:
        raise ConfigError(f"only the middle site may flip, got {pattern!r}")
    return src, dst


def estimate_pattern_rates(
    seg: PeriodSegmentation, lattice: LatticeSpec, patterns: Iterable[str] = DEFAULT_PATTERNS
) -> PatternTransitionCounts:
    """Count flips of a centre site given its two neighbours.

    A source pattern matches a site when (left, centre, right) equals it or its
    mirror image. Each matching sample adds one sample interval to the time at
    risk; an event is a match whose centre alone flips by the next sample,
    both neighbours unchanged. The final sample has no successor and is not at
    risk.
    """
    dark = np.asarray(seg.dark, dtype=bool)
    n = dark.shape[1]
    if n != lattice.n_atoms:
        raise ConfigError("segmentation and lattice disagree on the number of atoms")
    if n < 3:
        raise ConfigError("three-site patterns need at least three atoms")
    left = np.roll(dark, 1, axis=1)
    right = np.roll(dark, -1, axis=1)
    valid = np.ones(n, dtype=bool)
    if lattice.boundary == "open":
        valid[[0, -1]] = False
    now = slice(0, -1)
    nxt = slice(1, None)
    same_neighbors = (left[now] == left[nxt]) & (right[now] == right[nxt])
    events, risk = {}, {}
    for pattern in patterns:
        src, dst = _parse_pattern(pattern)
        s = [c == "D" for c in src]
        match = (dark == s[1]) & (
            ((left == s[0]) & (right == s[2])) | ((left == s[2]) & (right == s[0]))
        )
        match &= valid[None, :]
        at_risk = match[now]
        flipped = at_risk & same_neighbors & (dark[nxt] == (dst[1] == "D"))
        events[pattern] = int(flipped.sum())
        risk[pattern] = float(at_risk.sum()) * seg.sample_interval
    return PatternTransitionCounts(events=events, time_at_risk=risk)


def merge_pattern_counts(counts: Iterable[PatternTransitionCounts]) -> PatternTransitionCounts:
    events: dict[str, int] = {}
    risk: dict[str, float] = {}
    for c in counts:
        for k in c.events:
            events[k] = events.get(k, 0) + c.events[k]
            risk[k] = risk.get(k, 0.0) + c.time_at_risk[k]
    return PatternTransitionCounts(events, risk)


# ---------------------------------------------------------------------------
# emission statistics


def inter_emission_intervals(records) -> np.ndarray:
    """Gaps between consecutive emissions (any atom), pooled over records."""
    if isinstance(records, TrajectoryRecord):
        records = [records]
    return np.concatenate([np.diff(r.emission_times) for r in records] or [np.empty(0)])


def empirical_survival(records, min_events: int = 100) -> SurvivalCurve:
    """Empirical probability that an inter-emission interval exceeds ``t``.

    Only complete intervals (between two recorded emissions) enter.
    """
    gaps = np.sort(inter_emission_intervals(records))
    if gaps.size + 1 < min_events:
        raise InsufficientDataError(f"need at least {min_events} emissions, got {gaps.size + 1}")
    n = gaps.size
    t = np.concatenate([[0.0], gaps])
    values = np.concatenate([[1.0], 1.0 - np.arange(1, n + 1) / n])
    return SurvivalCurve(t=t, values=values)


def ks_distance(intervals, model: SurvivalCurve) -> float:
    """Kolmogorov-Smirnov distance between intervals and a survival curve."""
    intervals = np.asarray(intervals, dtype=np.float64)
    if intervals.max() > model.t[-1]:
        raise ConfigError("model survival grid does not cover the longest interval")
    return float(scipy.stats.kstest(intervals, lambda x: 1.0 - model(x)).statistic)


def fit_tail(curve: SurvivalCurve, t_min: float, t_max: float | None = None) -> tuple[float, float]:
    """Fit ``p * exp(-rate * t)`` to the curve on ``[t_min, t_max]`` by least squares in log space."""
    t_max = curve.t[-1] if t_max is None else t_max
    sel = (curve.t >= t_min) & (curve.t <= t_max) & (curve.values > 0)
    if sel.sum() < 3:
        raise InsufficientDataError("too few points in the tail window")
    slope, intercept = np.polyfit(curve.t[sel], np.log(curve.values[sel]), 1)
    curve.tail = (float(np.exp(intercept)), float(-slope))
    return curve.tail


def tail_onset(curve: SurvivalCurve, rel_tol: float = 0.01) -> float:
    """Earliest time after which ``curve`` stays within ``rel_tol`` of its fitted tail.

    Gaps longer than this belong to the slow mode alone, so it is a natural
    threshold for :func:`estimate_gap_rates`.
    """
    if curve.tail is None:
        raise ConfigError("fit the tail first (fit_tail)")
    amplitude, rate = curve.tail
    model = amplitude * np.exp(-rate * curve.t)
    off = np.flatnonzero(np.abs(curve.values - model) > rel_tol * model)
    if off.size == 0:
        return float(curve.t[0])
    if off[-1] + 1 >= curve.t.size:
        raise InsufficientDataError("curve never settles onto its tail")
    return float(curve.t[off[-1] + 1])


@dataclass(frozen=True)
class GapRates:
    """Rates of entering and leaving long no-emission periods.

    ``exit_rate`` uses the excess of each long gap over the threshold
    (memoryless). ``entry_rate`` counts long periods per unit of time spent
    outside them, corrected for long-mode gaps shorter than the threshold.
    """

    threshold: float
    n_long: int
    exit_rate: float
    exit_rate_err: float
    entry_rate: float
    entry_rate_err: float
    time_long: float
    time_short: float


def estimate_gap_rates(records, gap_threshold: float) -> GapRates:
    """Switching rates between emitting and long silent periods from emission gaps."""
    gaps = inter_emission_intervals(records)
    long = gaps[gaps > gap_threshold]
    if long.size == 0:
        raise InsufficientDataError("no gaps exceed the threshold")
    exit_rate = long.size / float(np.sum(long - gap_threshold))
    time_long = float(long.sum())
    time_short = float(gaps.sum()) - time_long
    if time_short <= 0:
        raise InsufficientDataError("no time outside long gaps")
    entry = long.size * np.exp(exit_rate * gap_threshold) / time_short
    return GapRates(
        threshold=float(gap_threshold),
        n_long=int(long.size),
        exit_rate=float(exit_rate),
        exit_rate_err=float(exit_rate / np.sqrt(long.size)),
        entry_rate=float(entry),
        entry_rate_err=float(entry / np.sqrt(long.size)),
        time_long=time_long,
        time_short=time_short,
    )
