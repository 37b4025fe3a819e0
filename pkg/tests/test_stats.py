from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from freqlab.errors import EmptyInput, InvalidArgument
from freqlab.oracle import SimplifiedSystem, Sinusoid, mean_delta_omega, stationary_sigma
from freqlab.rng import NoiseStream
from freqlab.sde import OuParams, Trajectory, simulate_ensemble, simulate_linear, stationary_covariance
from freqlab.stats import (
    Histogram,
    SampleSeries,
    bimodality_coefficient,
    build_histogram,
    deadband_stats,
    default_range,
    flatness,
    mann_kendall,
    modality,
    moment_series,
    normalize_density,
    sample_series,
    window_aggregate,
)


def series(values, cadence=1.0, unit="pu", start=0.0):
    return SampleSeries(start, cadence, np.asarray(values, dtype=float), unit)


def verdict_of(values, n_bins=101):
    s = series(values)
    return modality(build_histogram(s, n_bins, default_range(s, 0.0)))


# -- sampling ---------------------------------------------------------------------------


def test_one_day_at_one_second():
    n = 8_640_000
    t = np.arange(n) * 0.01
    traj = Trajectory(t, np.zeros((n, 1)), ("delta_omega",))
    s = sample_series(traj, "delta_omega", 1.0)
    assert s.count == 86400
    assert np.array_equal(s.times, np.arange(86400.0))


def test_identity_and_constant_sampling():
    t = np.arange(100) * 0.1
    x = np.sin(t)
    traj = Trajectory(t, x, ("x",))
    assert np.array_equal(sample_series(traj, "x", 0.1).values, x)
    const = Trajectory(t, np.full(100, 2.5), ("x",))
    assert np.all(sample_series(const, "x", 0.5).values == 2.5)


def test_sampling_picks_without_interpolation():
    t = np.arange(10) * 0.5
    traj = Trajectory(t, t**2, ("x",))
    assert np.array_equal(sample_series(traj, "x", 1.0).values, (t**2)[::2])


def test_sampling_rejects_non_multiple():
    traj = Trajectory(np.arange(100) * 0.01, np.zeros(100), ("x",))
    with pytest.raises(InvalidArgument):
        sample_series(traj, "x", 0.015)


def test_unit_conversion_roundtrip():
    s = series([0.0006, -0.001], unit="pu")
    mhz = s.to("mHz")
    assert np.allclose(mhz.values, [36.0, -60.0])
    assert np.allclose(mhz.to("pu").values, s.values)
    assert "t,value_mHz" in mhz.to_csv()


# -- histograms -------------------------------------------------------------------------


def test_all_samples_central():
    h = build_histogram(series(np.full(100, 0.5)), 5, (0.0, 1.0))
    assert list(h.counts) == [0, 0, 100, 0, 0]


def test_uniform_chi_square():
    x = np.random.default_rng(1).uniform(-1, 1, 100_000)
    h = build_histogram(series(x), 50, (-1, 1))
    _, p = sps.chisquare(h.counts)
    assert p > 0.01


def test_gaussian_density_within_multinomial_bounds():
    n = 100_000
    x = np.random.default_rng(2).normal(0.0, 0.01, n)
    h = build_histogram(series(x, unit="Hz"), 101, (-0.05, 0.05))
    probs = np.diff(sps.norm.cdf(h.edges, scale=0.01))
    # exact binomial tails at the two-sided 3 sigma level; the normal
    # approximation is meaningless in tail bins holding << 1 expected sample
    level = 2 * sps.norm.sf(3.0)
    lower = sps.binom.cdf(h.counts, n, probs)
    upper = sps.binom.sf(h.counts - 1, n, probs)
    assert np.all(2 * np.minimum(lower, upper) >= level)
    dense = n * probs >= 5
    bound = 3 * np.sqrt(n * probs * (1 - probs))
    assert np.all(np.abs(h.counts - n * probs)[dense] <= bound[dense])


def test_overflow_counted_not_dropped():
    h = build_histogram(series([-5.0, -1.0, 0.0, 1.0, 5.0, 7.0]), 4, (-1.0, 1.0))
    assert (h.underflow, h.overflow, h.accepted) == (1, 2, 3)
    assert h.total == 6


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=300), st.integers(2, 40))
@settings(max_examples=100)
def test_mass_conservation(xs, n_bins):
    h = build_histogram(series(xs), n_bins, (-3.0, 4.0))
    assert h.accepted + h.underflow + h.overflow == len(xs)


def test_histogram_errors():
    with pytest.raises(EmptyInput):
        build_histogram(series([]), 10, (0, 1))
    with pytest.raises(InvalidArgument):
        build_histogram(series([1.0]), 1, (0, 1))
    with pytest.raises(InvalidArgument):
        build_histogram(series([1.0]), 4, (1, 0))
    with pytest.raises(EmptyInput):
        normalize_density(build_histogram(series([5.0]), 4, (0, 1)))


def test_density_normalization():
    x = np.random.default_rng(3).normal(size=5000)
    h = normalize_density(build_histogram(series(x), 37, (-3, 3)))
    assert abs(float(np.sum(h.density * h.widths)) - 1) <= 1e-9
    doubled = normalize_density(Histogram(h.edges, 2 * h.counts))
    assert np.array_equal(doubled.density, h.density)
    one = normalize_density(Histogram(np.array([0.0, 0.25]), np.array([7])))
    assert one.density[0] == 4.0


def test_histogram_csv_format():
    h = build_histogram(series([0.1, 0.2]), 2, (0, 1))
    lines = h.to_csv().splitlines()
    assert lines[0] == "bin_left,bin_right,count,density"
    assert lines[1] == "0,0.5,2,"
    assert normalize_density(h).to_csv().splitlines()[1] == "0,0.5,2,2"


# -- modality ---------------------------------------------------------------------------


def test_standard_normal_unimodal():
    r = verdict_of(np.random.default_rng(4).normal(size=100_000))
    assert r.verdict == "unimodal"
    assert r.peak_count == 1
    assert r.bimodality_coefficient == pytest.approx(1 / 3, abs=0.02)


def test_balanced_mixture_bimodal():
    rng = np.random.default_rng(5)
    x = np.concatenate([rng.normal(-3, 1, 50_000), rng.normal(3, 1, 50_000)])
    r = verdict_of(x)
    assert r.verdict == "bimodal"
    assert r.peak_count == 2
    assert r.peak_locations[0] == pytest.approx(-3, abs=0.25)
    assert r.peak_locations[1] == pytest.approx(3, abs=0.25)


def test_small_sample_indeterminate():
    assert verdict_of(np.random.default_rng(6).normal(size=500)).verdict == "indeterminate"


def test_separation_scan_flips_once():
    rng = np.random.default_rng(7)
    base = rng.normal(size=(2, 50_000))
    verdicts = []
    for sep in np.linspace(0.0, 6.0, 31):
        x = np.concatenate([base[0] - sep / 2, base[1] + sep / 2])
        verdicts.append(verdict_of(x).verdict)
    assert verdicts[0] == "unimodal" and verdicts[-1] == "bimodal"
    assert "bimodal" not in verdicts[: verdicts.index("bimodal")]
    first_b = verdicts.index("bimodal")
    assert all(v == "bimodal" for v in verdicts[first_b:])
    assert all(v in ("unimodal", "indeterminate") for v in verdicts[:first_b])
    last_u = max(i for i, v in enumerate(verdicts) if v == "unimodal")
    assert all(v == "unimodal" for v in verdicts[: last_u + 1])


def test_bimodality_coefficient_reference():
    # uniform distribution: skew 0, excess kurtosis -1.2 -> BC = 1 / 1.8
    centers = np.arange(1000.0)
    counts = np.full(1000, 1000)
    assert bimodality_coefficient(centers, counts) == pytest.approx(1 / 1.8, rel=1e-3)


def test_modality_reports_serialize():
    r = verdict_of(np.random.default_rng(8).normal(size=20_000))
    text = dict(line.split("=", 1) for line in r.to_text().splitlines())
    assert text["verdict"] == r.verdict and int(text["peak_count"]) == r.peak_count
    assert json.loads(r.to_json())["peak_count"] == r.peak_count


def test_modality_is_pure():
    x = np.random.default_rng(9).normal(size=20_000)
    a, b = verdict_of(x), verdict_of(x)
    assert a == b


def test_flatness_window():
    x = np.random.default_rng(10).uniform(-1, 1, 200_000)
    s = series(x)
    h = build_histogram(s, 101, (-1.5, 1.5))
    r = modality(h)
    assert flatness(r, h, 0.5) > 0.9
    g = build_histogram(series(np.random.default_rng(11).normal(size=200_000)), 101, (-4, 4))
    assert flatness(modality(g), g, 2.0) < 0.2


# -- window aggregation -------------------------------------------------------------------


def drifting_day(seed=12):
    t = np.arange(86400.0)
    mean = 80.0 * np.sin(2 * np.pi * t / 86400)
    return series(mean + np.random.default_rng(seed).normal(0, 15, t.size), unit="mHz")


def test_hourly_windows_and_additivity():
    s = drifting_day()
    agg = window_aggregate(s, "hourly", 101, (-150, 150))
    assert len(agg.histograms) == 24
    assert all(h.total == 3600 for h in agg.histograms)
    assert all(np.array_equal(h.edges, agg.combined.edges) for h in agg.histograms)
    assert np.array_equal(agg.combined.counts, np.sum([h.counts for h in agg.histograms], axis=0))
    assert agg.combined.total == 86400


def test_drifting_mean_hourly_unimodal_daily_bimodal():
    agg = window_aggregate(drifting_day(), "hourly", 101, (-150, 150))
    assert [modality(h).verdict for h in agg.histograms] == ["unimodal"] * 24
    assert modality(agg.combined).verdict == "bimodal"


def test_window_errors():
    with pytest.raises(InvalidArgument):
        window_aggregate(series(np.zeros(1000)), "hourly", 10, (-1, 1))
    with pytest.raises(InvalidArgument):
        window_aggregate(series(np.zeros(7200)), "weekly", 10, (-1, 1))


def test_partial_trailing_window_kept():
    agg = window_aggregate(series(np.zeros(5400)), "hourly", 10, (-1, 1))
    assert [h.total for h in agg.histograms] == [3600, 1800]


# -- dead-band statistics ------------------------------------------------------------------


def test_deadband_inside_only():
    d = deadband_stats(series(np.full(86400, 0.01)), 0.036)
    assert (d.fraction_outside, d.crossing_count, d.trend.direction) == (0.0, 0, "flat")


def test_deadband_alternating():
    x = 2 * 0.036 * np.tile([1.0, -1.0], 50)
    x[::2] = 0.0  # inside, outside, inside, ...
    d = deadband_stats(series(x), 0.036)
    assert d.crossing_count == len(x) - 1
    assert d.fraction_outside == 0.5


def test_deadband_trend_zero_damping():
    """D_L = 0: spread grows, so the exceedance rises window after window."""
    sys = SimplifiedSystem(3.0, 0.0, OuParams(alpha=0.5, b=1.0)).to_linear_sde()
    times = np.arange(0.0, 6 * 3600.0, 10.0)
    out = simulate_ensemble(sys, times, 0.5, NoiseStream(13), 100)
    fractions = []
    for p in range(out.shape[1]):
        s = series(out[:, p, 0], cadence=10.0)
        fractions.append(deadband_stats(s, 10.0, trend_window=1800.0).window_fractions)
    mean_fr = np.mean(fractions, axis=0)
    assert len(mean_fr) == 12
    assert mann_kendall(mean_fr).direction == "increasing"


def test_mann_kendall_directions():
    assert mann_kendall(np.arange(20.0)).direction == "increasing"
    assert mann_kendall(-np.arange(20.0)).direction == "decreasing"
    assert mann_kendall(np.random.default_rng(14).normal(size=20)).direction == "flat"


# -- window moments -----------------------------------------------------------------------


def test_moment_series_constant():
    _, m, v = moment_series(series(np.full(600, 3.0)), 60.0)
    assert np.all(m == 3.0) and np.all(v == 0.0)
    with pytest.raises(InvalidArgument):
        moment_series(series(np.zeros(100)), 5.0)


def test_pooled_variance_matches_sigma():
    sys = SimplifiedSystem(3.0, 2.0, OuParams(alpha=0.5, b=1.0))
    traj = simulate_linear(sys.to_linear_sde(), 86400.0, 0.1, NoiseStream(15))
    s = sample_series(traj, "delta_omega", 1.0)
    s = series(s.values[600:])
    _, m, v = moment_series(s, 3600.0)
    pooled = float(np.mean(v + m**2) - np.mean(m) ** 2)
    assert abs(pooled / stationary_sigma(sys) ** 2 - 1) < 0.05


def test_window_means_trace_sinusoidal_mean():
    psi = 2 * np.pi / 86400
    sys = SimplifiedSystem(3.0, 2.0, OuParams(alpha=0.5, b=1.0), Sinusoid(0.5, psi))
    lin = sys.to_linear_sde()
    traj = simulate_linear(lin, 86400.0, 0.1, NoiseStream(16))
    s = sample_series(traj, "delta_omega", 1.0)
    window = 1800.0
    starts, m, _ = moment_series(s, window)
    ref = np.array([mean_delta_omega(t0 + np.arange(1800.0), sys).mean() for t0 in starts])
    # standard error of a window mean of a stationary process with integral time tau
    w_inf = stationary_covariance(lin)
    tau = float(np.linalg.solve(lin.a, w_inf)[0, 0] / w_inf[0, 0])
    se = math.sqrt(w_inf[0, 0] * 2 * tau / window)
    z = (m - ref) / se
    # 3 sigma, family-wise over the windows
    z_max = sps.norm.isf(sps.norm.sf(3.0) / len(z))
    assert np.all(np.abs(z) <= z_max)
    assert abs(z.mean()) <= 3 / math.sqrt(len(z))
    assert np.abs(ref).max() > 10 * se  # the drive is actually visible
