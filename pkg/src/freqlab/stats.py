"""Sampling, histograms, modality diagnostics and dead-band statistics."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, signal
from scipy import stats as sps

from .errors import EmptyInput, InvalidArgument
from .sde import Trajectory

UNITS = ("pu", "Hz", "mHz")
BIMODALITY_THRESHOLD = 5.0 / 9.0
MIN_SAMPLES = 1000
PROMINENCE = 0.05
WINDOWS = {"hourly": 3600.0, "daily": 86400.0}


def convert(values, unit: str, to: str, f0: float = 60.0):
    """Convert frequency deviations between pu, Hz and mHz."""
    if unit not in UNITS or to not in UNITS:
        raise InvalidArgument(f"unknown unit {unit!r} or {to!r}")
    per_hz = {"pu": 1.0 / f0, "Hz": 1.0, "mHz": 1000.0}
    return np.asarray(values, dtype=float) * (per_hz[to] / per_hz[unit])


@dataclass(frozen=True, eq=False)
class SampleSeries:
    start_time: float
    cadence: float
    values: np.ndarray
    unit: str = "pu"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.cadence > 0:
            raise InvalidArgument(f"cadence must be > 0, got {self.cadence}")
        if self.unit not in UNITS:
            raise InvalidArgument(f"unit must be one of {UNITS}, got {self.unit!r}")
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @property
    def count(self) -> int:
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        return self.start_time + self.cadence * np.arange(self.count)

    def to(self, unit: str, f0: float = 60.0) -> SampleSeries:
        return SampleSeries(self.start_time, self.cadence, convert(self.values, self.unit, unit, f0), unit, self.meta)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(f"t,value_{self.unit}\n")
        for t, v in zip(self.times, self.values):
            buf.write(f"{t:.17g},{v:.17g}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def sample_series(traj: Trajectory, component: str, cadence: float, unit: str = "pu") -> SampleSeries:
    """State value at every ``cadence`` boundary of a uniformly stepped trajectory."""
    if len(traj.t) < 2:
        return SampleSeries(float(traj.t[0]), cadence, traj.component(component)[:1], unit)
    steps = np.diff(traj.t)
    step = float(steps[0])
    if np.max(np.abs(steps - step)) > 1e-9 * max(abs(traj.t[-1]), 1.0):
        raise InvalidArgument("trajectory is not uniformly stepped")
    ratio = cadence / step
    stride = int(round(ratio))
    if stride < 1 or abs(ratio - stride) > 1e-9 * ratio:
        raise InvalidArgument(f"cadence {cadence} is not an integer multiple of the step {step}")
    return SampleSeries(float(traj.t[0]), cadence, traj.component(component)[::stride], unit)


@dataclass(frozen=True, eq=False)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    unit: str = "pu"
    underflow: int = 0
    overflow: int = 0
    density: np.ndarray | None = None

    def __post_init__(self):
        if len(self.counts) != len(self.edges) - 1:
            raise InvalidArgument("need len(counts) == len(edges) - 1")
        if np.any(np.diff(self.edges) <= 0):
            raise InvalidArgument("edges must be strictly ascending")

    @property
    def accepted(self) -> int:
        return int(self.counts.sum())

    @property
    def total(self) -> int:
        return self.accepted + self.underflow + self.overflow

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write("bin_left,bin_right,count,density\n")
        for i, c in enumerate(self.counts):
            d = "" if self.density is None else f"{self.density[i]:.17g}"
            buf.write(f"{self.edges[i]:.17g},{self.edges[i + 1]:.17g},{int(c)},{d}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _edges(n_bins: int, lo: float, hi: float) -> np.ndarray:
    if n_bins < 2:
        raise InvalidArgument(f"n_bins must be >= 2, got {n_bins}")
    if not lo < hi:
        raise InvalidArgument(f"need lo < hi, got [{lo}, {hi}]")
    return np.linspace(lo, hi, n_bins + 1)


def _bin(values: np.ndarray, edges: np.ndarray, unit: str) -> Histogram:
    lo, hi = edges[0], edges[-1]
    counts, _ = np.histogram(values, bins=edges)
    under = int(np.count_nonzero(values < lo))
    over = int(np.count_nonzero(values > hi))
    return Histogram(edges, counts.astype(np.int64), unit, under, over)


def build_histogram(s: SampleSeries, n_bins: int, range: tuple[float, float]) -> Histogram:
    """Equal-width counts over ``range``; samples outside land in the overflow tallies."""
    if s.count == 0:
        raise EmptyInput("cannot histogram an empty series")
    return _bin(s.values, _edges(n_bins, *range), s.unit)


def default_range(s: SampleSeries, d_za: float) -> tuple[float, float]:
    """``±3 max(d_za, 2 sigma)``, the shared default binning window."""
    half = 3.0 * max(d_za, 2.0 * float(np.std(s.values)))
    if half == 0:
        half = 1.0
    return -half, half


def normalize_density(h: Histogram) -> Histogram:
    total = h.accepted
    if total == 0:
        raise EmptyInput("histogram holds no samples inside its range")
    density = h.counts / (total * h.widths)
    return Histogram(h.edges, h.counts, h.unit, h.underflow, h.overflow, density)


@dataclass(frozen=True)
class ModalityReport:
    peak_count: int
    peak_locations: tuple[float, ...]
    bimodality_coefficient: float
    verdict: str
    n_samples: int
    bandwidth: float
    unit: str = "pu"
    smoothed: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_text(self) -> str:
        locs = ";".join(f"{x:.9g}" for x in self.peak_locations)
        return (
            f"verdict={self.verdict}\n"
            f"peak_count={self.peak_count}\n"
            f"peak_locations={locs}\n"
            f"bimodality_coefficient={self.bimodality_coefficient:.9g}\n"
            f"n_samples={self.n_samples}\n"
            f"bandwidth={self.bandwidth:.9g}\n"
            f"unit={self.unit}\n"
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "verdict": self.verdict,
                "peak_count": self.peak_count,
                "peak_locations": list(self.peak_locations),
                "bimodality_coefficient": self.bimodality_coefficient,
                "n_samples": self.n_samples,
                "bandwidth": self.bandwidth,
                "unit": self.unit,
            },
            sort_keys=True,
        )


def bimodality_coefficient(centers: np.ndarray, counts: np.ndarray) -> float:
    """Sample-size corrected ``(skew^2 + 1) / kurtosis`` of binned data."""
    n = float(counts.sum())
    if n < 4:
        return math.nan
    w = counts / n
    mean = float(w @ centers)
    d = centers - mean
    m2 = float(w @ d**2)
    if m2 == 0:
        return 0.0
    g1 = float(w @ d**3) / m2**1.5
    g2 = float(w @ d**4) / m2**2 - 3.0
    skew = g1 * math.sqrt(n * (n - 1)) / (n - 2)
    kurt = ((n + 1) * g2 + 6) * (n - 1) / ((n - 2) * (n - 3))
    return (skew**2 + 1) / (kurt + 3 * (n - 1) ** 2 / ((n - 2) * (n - 3)))


def modality(h: Histogram) -> ModalityReport:
    """Peak count of the Silverman-smoothed density plus the bimodality coefficient.

    bimodal: >= 2 peaks and BC > 5/9; unimodal: one peak and BC <= 5/9;
    anything else, or fewer than 1000 samples, is indeterminate.
    """
    n = h.accepted
    centers = h.centers
    width = float(h.widths[0])
    if n == 0:
        return ModalityReport(0, (), math.nan, "indeterminate", 0, math.nan, h.unit)
    w = h.counts / n
    mean = float(w @ centers)
    sd = math.sqrt(max(float(w @ (centers - mean) ** 2), 0.0))
    bandwidth = 1.06 * sd * n ** (-0.2)
    dens = h.counts / (n * h.widths)
    smooth = ndimage.gaussian_filter1d(dens, bandwidth / width, mode="constant") if bandwidth > 0 else dens
    # zero padding lets a peak sit on the first or last bin
    padded = np.concatenate([[0.0], smooth, [0.0]])
    idx, _ = signal.find_peaks(padded, prominence=PROMINENCE * float(smooth.max()))
    peaks = tuple(float(centers[i - 1]) for i in idx)
    bc = bimodality_coefficient(centers, h.counts)
    if n < MIN_SAMPLES:
        verdict = "indeterminate"
    elif len(peaks) >= 2 and bc > BIMODALITY_THRESHOLD:
        verdict = "bimodal"
    elif len(peaks) == 1 and bc <= BIMODALITY_THRESHOLD:
        verdict = "unimodal"
    else:
        verdict = "indeterminate"
    return ModalityReport(len(peaks), peaks, bc, verdict, n, bandwidth, h.unit, smooth)


def flatness(report: ModalityReport, h: Histogram, half_width: float) -> float:
    """min/max of the smoothed density over bins centred inside ``±half_width``."""
    inside = np.abs(h.centers) <= half_width
    if not inside.any() or report.smoothed is None:
        raise InvalidArgument("no bins inside the flatness window")
    seg = report.smoothed[inside]
    return float(seg.min() / seg.max()) if seg.max() > 0 else 0.0


@dataclass(frozen=True, eq=False)
class WindowAggregate:
    window: str
    starts: np.ndarray
    histograms: list[Histogram]
    combined: Histogram


def window_aggregate(
    s: SampleSeries, window: str, n_bins: int, range: tuple[float, float]
) -> WindowAggregate:
    """Per-window histograms on shared edges plus their bin-wise sum.

    A trailing partial window is kept as its own histogram.
    """
    edges = _edges(n_bins, *range)
    span = s.count * s.cadence
    if window == "full":
        per = s.count
    elif window in WINDOWS:
        length = WINDOWS[window]
        if length > span + 1e-9:
            raise InvalidArgument(f"{window} window longer than the {span:g} s series")
        per = int(round(length / s.cadence))
        if abs(per * s.cadence - length) > 1e-9 * length or per < 1:
            raise InvalidArgument(f"cadence {s.cadence} does not divide the {window} window")
    else:
        raise InvalidArgument(f"window must be hourly, daily or full, got {window!r}")
    if s.count == 0:
        raise EmptyInput("empty series")
    hists = [_bin(s.values[i : i + per], edges, s.unit) for i in np.arange(0, s.count, per)]
    starts = s.start_time + s.cadence * np.arange(0, s.count, per)
    combined = Histogram(
        edges,
        np.sum([h.counts for h in hists], axis=0),
        s.unit,
        sum(h.underflow for h in hists),
        sum(h.overflow for h in hists),
    )
    return WindowAggregate(window, starts, hists, combined)


@dataclass(frozen=True)
class Trend:
    direction: str  # "increasing", "decreasing" or "flat"
    tau: float
    p_value: float


def mann_kendall(x, level: float = 0.05) -> Trend:
    """Mann-Kendall monotone trend test (Kendall's tau against time)."""
    x = np.asarray(x, dtype=float)
    if len(x) < 3 or np.all(x == x[0]):
        return Trend("flat", 0.0, 1.0)
    tau, p = sps.kendalltau(np.arange(len(x)), x)
    if p < level:
        return Trend("increasing" if tau > 0 else "decreasing", float(tau), float(p))
    return Trend("flat", float(tau), float(p))


@dataclass(frozen=True)
class DeadbandStats:
    fraction_outside: float
    crossing_count: int
    window_fractions: tuple[float, ...]
    trend: Trend

    def to_text(self) -> str:
        fr = ";".join(f"{x:.6g}" for x in self.window_fractions)
        return (
            f"fraction_outside={self.fraction_outside:.9g}\n"
            f"crossing_count={self.crossing_count}\n"
            f"window_fractions={fr}\n"
            f"trend={self.trend.direction}\n"
            f"trend_tau={self.trend.tau:.6g}\n"
            f"trend_p={self.trend.p_value:.6g}\n"
        )


def deadband_stats(s: SampleSeries, d_za: float, trend_window: float = 6 * 3600.0) -> DeadbandStats:
    """Exceedance of ``|value| > d_za`` (same unit as the series)."""
    if d_za < 0:
        raise InvalidArgument("d_za must be >= 0")
    if s.count == 0:
        raise EmptyInput("empty series")
    outside = np.abs(s.values) > d_za
    crossings = int(np.count_nonzero(outside[1:] != outside[:-1]))
    per = max(1, int(round(trend_window / s.cadence)))
    fr = tuple(float(outside[i : i + per].mean()) for i in range(0, s.count, per))
    return DeadbandStats(float(outside.mean()), crossings, fr, mann_kendall(fr))


def moment_series(s: SampleSeries, window: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Non-overlapping window ``(start, mean, variance)``; a partial tail window is dropped."""
    if window < 10 * s.cadence:
        raise InvalidArgument("window must span at least 10 samples")
    per = int(round(window / s.cadence))
    n = s.count // per
    if n == 0:
        raise InvalidArgument("series shorter than one window")
    blocks = s.values[: n * per].reshape(n, per)
    starts = s.start_time + s.cadence * per * np.arange(n)
    return starts, blocks.mean(axis=1), blocks.var(axis=1)
