"""``freqlab`` command line: simulate scenarios, print oracle curves, analyze measured data.

Exit codes: 0 success, 2 invalid input or parameters, 3 simulation diverged.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import FreqlabError, SimulationDiverged
from .oracle import (
    SimplifiedSystem,
    Sinusoid,
    mean_delta_omega,
    stationary_sigma,
    var_delta_omega,
    var_zero_damping,
)
from .scenarios import resolve_scenario, run, worker_count
from .sde import OuParams
from .stats import Histogram, SampleSeries, build_histogram, modality, normalize_density

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_DIVERGED = 3


def _fail(msg: str, code: int = EXIT_INVALID) -> int:
    print(f"freqlab: error: {msg}", file=sys.stderr)
    return code


# -- simulate --------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    try:
        sc = resolve_scenario(args.scenario)
        if args.seed is not None:
            sc = replace(sc, seed=args.seed)
        if args.duration_override is not None:
            sc = replace(sc, duration=args.duration_override)
        result = run(sc)
    except SimulationDiverged as exc:
        return _fail(f"simulation diverged: {exc}", EXIT_DIVERGED)
    except (FreqlabError, ValueError) as exc:
        return _fail(str(exc))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mhz = result.series_mhz()
    with open(out / "samples.csv", "w", newline="") as fh:
        fh.write("t_s,delta_f_mhz\n")
        for t, v in zip(mhz.times, mhz.values):
            fh.write(f"{t:.17g},{v:.17g}\n")
    normalize_density(result.histogram).to_csv(out / "histogram.csv")
    (out / "modality.txt").write_text(result.modality.to_text())
    (out / "report.txt").write_text(result.report_text())
    print(f"{sc.label}: {result.modality.verdict}, {result.series.count} samples -> {out}")
    return EXIT_OK


# -- oracle ----------------------------------------------------------------------------


def cmd_oracle(args) -> int:
    try:
        drive = Sinusoid(args.rho, args.psi) if args.rho is not None else None
        sys_ = SimplifiedSystem(args.h, args.dl, OuParams(alpha=args.alpha, b=args.b), drive)
        if args.curve == "sigma":
            print(f"{stationary_sigma(sys_):.6g}")
            return EXIT_OK
        if args.t_max < 0 or not args.t_step > 0:
            return _fail("need --t-max >= 0 and --t-step > 0")
        n = int(math.floor(args.t_max / args.t_step + 1e-9))
        t = args.t_step * np.arange(n + 1)
        if args.curve == "var":
            v = var_delta_omega(t, sys_)
        elif args.curve == "var0":
            v = var_zero_damping(t, sys_)
        else:
            v = mean_delta_omega(t, sys_)
    except (FreqlabError, ValueError) as exc:
        return _fail(str(exc))
    rows = ["t,value"] + [f"{ti:.10g},{vi:.10g}" for ti, vi in zip(t, np.atleast_1d(v))]
    print("\n".join(rows))
    return EXIT_OK


# -- analyze ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MeasuredSeries:
    timestamps: np.ndarray  # UTC epoch seconds
    frequency: np.ndarray  # Hz
    source: str
    bad_rows: int
    total_rows: int
    gaps: tuple[tuple[float, float], ...]
    out_of_window: int


def _parse_time(text: str) -> float:
    text = text.strip()
    try:
        return float(int(text))
    except ValueError:
        pass
    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_measured(path, f0: float = 60.0) -> MeasuredSeries:
    """``timestamp,frequency_hz`` rows; bad rows are counted, never guessed at."""
    ts, fs = [], []
    bad = total = 0
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or all(not c.strip() for c in row):
                continue
            if i == 0 and not _is_number(row[-1]):
                continue  # header
            total += 1
            try:
                if len(row) != 2:
                    raise ValueError
                t, f = _parse_time(row[0]), float(row[1])
                if not (math.isfinite(t) and math.isfinite(f)):
                    raise ValueError
            except ValueError:
                bad += 1
                continue
            ts.append(t)
            fs.append(f)
    t = np.array(ts)
    f = np.array(fs)
    if len(t) > 1 and np.any(np.diff(t) < 0):
        order = np.argsort(t, kind="stable")
        t, f = t[order], f[order]
    inside = np.abs(f - f0) <= 2.0
    out_of_window = int(np.count_nonzero(~inside))
    t, f = t[inside], f[inside]
    gaps: list[tuple[float, float]] = []
    if len(t) > 2:
        step = float(np.median(np.diff(t)))
        idx = np.nonzero(np.diff(t) > 1.5 * step)[0]
        gaps = [(float(t[i]), float(t[i + 1])) for i in idx]
    return MeasuredSeries(t, f, str(path), bad, total, tuple(gaps), out_of_window)


_WINDOW_S = {"hourly": 3600.0, "daily": 86400.0}


def cmd_analyze(args) -> int:
    try:
        data = read_measured(args.input, args.f0_hz)
    except OSError as exc:
        return _fail(f"cannot read {args.input}: {exc}")
    if data.total_rows == 0:
        return _fail(f"{args.input}: no data rows")
    if data.bad_rows > 0.5 * data.total_rows:
        return _fail(f"{args.input}: {data.bad_rows} of {data.total_rows} rows unparseable")
    if len(data.timestamps) == 0:
        return _fail(f"{args.input}: no samples inside f0 +/- 2 Hz")
    if args.bins < 2:
        return _fail("--bins must be >= 2")
    dev = (data.frequency - args.f0_hz) * 1000.0
    d_za = args.d_za_mhz if args.d_za_mhz is not None else 0.0
    if d_za < 0:
        return _fail("--d-za-mhz must be >= 0")
    half = 3.0 * max(d_za, 2.0 * float(np.std(dev)))
    lo, hi = (-half, half) if half > 0 else (-1.0, 1.0)

    t0 = float(data.timestamps[0])
    if args.window == "full":
        ids = np.zeros(len(dev), dtype=np.int64)
    else:
        ids = np.floor((data.timestamps - t0) / _WINDOW_S[args.window]).astype(np.int64)
    groups = [np.nonzero(ids == k)[0] for k in np.unique(ids)]

    def analyze(idx):
        s = SampleSeries(float(data.timestamps[idx[0]]), 1.0, dev[idx], "mHz")
        h = build_histogram(s, args.bins, (lo, hi))
        return s, h, modality(h)

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        results = list(pool.map(analyze, groups))

    hists = [h for _, h, _ in results]
    combined = Histogram(
        hists[0].edges,
        np.sum([h.counts for h in hists], axis=0),
        "mHz",
        sum(h.underflow for h in hists),
        sum(h.overflow for h in hists),
    )
    combined_mod = modality(combined)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    with open(out / "drift.csv", "w", newline="") as drift:
        drift.write("window,start_s,count,mean_mhz,std_mhz\n")
        for k, (s, h, m) in enumerate(results):
            normalize_density(h).to_csv(out / f"histogram_{k:04d}.csv")
            drift.write(f"{k},{s.start_time:.17g},{s.count},{np.mean(s.values):.9g},{np.std(s.values):.9g}\n")
            lines.append(f"window={k} start_s={s.start_time:.17g} n={s.count} verdict={m.verdict} "
                         f"peaks={m.peak_count} bc={m.bimodality_coefficient:.6g}")
    normalize_density(combined).to_csv(out / "histogram_combined.csv")
    lines.append(f"combined n={combined.accepted} verdict={combined_mod.verdict} "
                 f"peaks={combined_mod.peak_count} bc={combined_mod.bimodality_coefficient:.6g}")
    (out / "modality.txt").write_text("\n".join(lines) + "\n")
    summary = [
        f"source={data.source}",
        f"rows={data.total_rows}",
        f"bad_rows={data.bad_rows}",
        f"out_of_window={data.out_of_window}",
        f"gaps={len(data.gaps)}",
        *(f"gap={a:.17g}..{b:.17g}" for a, b in data.gaps),
        f"windows={len(results)}",
        f"combined_verdict={combined_mod.verdict}",
    ]
    if args.d_za_mhz is not None:
        summary.append(f"deadband_fraction_outside={float(np.mean(np.abs(dev) > d_za)):.9g}")
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    print("\n".join(lines))
    print("\n".join(summary))
    return EXIT_OK


# -- entry point -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="freqlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"freqlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a built-in or file scenario")
    s.add_argument("--scenario", required=True, help="built-in label (a..i, si) or scenario file")
    s.add_argument("--seed", type=int)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--duration-override", type=float, metavar="SECONDS")
    s.set_defaults(func=cmd_simulate)

    o = sub.add_parser("oracle", help="closed-form moments as CSV")
    o.add_argument("--h", type=float, default=3.0)
    o.add_argument("--dl", type=float, default=2.0)
    o.add_argument("--alpha", type=float, default=0.5)
    o.add_argument("--b", type=float, default=1.0)
    o.add_argument("--rho", type=float)
    o.add_argument("--psi", type=float)
    o.add_argument("--curve", choices=("sigma", "var", "var0", "mean"), required=True)
    o.add_argument("--t-max", type=float, default=20.0)
    o.add_argument("--t-step", type=float, default=0.1)
    o.set_defaults(func=cmd_oracle)

    a = sub.add_parser("analyze", help="histogram measured frequency data")
    a.add_argument("--input", required=True, help="CSV of timestamp,frequency_hz")
    a.add_argument("--window", choices=("hourly", "daily", "full"), default="hourly")
    a.add_argument("--d-za-mhz", type=float)
    a.add_argument("--f0-hz", type=float, default=60.0)
    a.add_argument("--bins", type=int, default=101)
    a.add_argument("--out-dir", default="analysis")
    a.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "oracle" and (args.rho is None) != (args.psi is None):
        return _fail("--rho and --psi go together")
    try:
        return args.func(args)
    except FreqlabError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
