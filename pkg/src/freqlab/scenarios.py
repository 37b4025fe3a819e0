"""Scenario files, the built-in scenario library and the run/compare pipeline.

Scenario files are INI text with the unit spelled in every key name::

    [scenario]
    label = b
    duration_s = 86400
    dt_s = 0.01
    warmup_s = 600
    seed = 1
    d_l_pu = 2.0
    inertia_multiplier = 1
    cadence_s = 1

    [generator.G1]
    h_s = 5.148
    rating_mva = 615
    governor = yes
    droop_pu = 0.05
    t_servo_s = 0.5
    d_za_mhz = 36          ; or d_za_hz / d_za_pu
    p_ref_pu = 0.3779

    [stochastic_load]       p_l0_mw, mu_pu_per_s, alpha_per_s, b_pu_per_sqrt_s, eta0_pu, gamma
    [drifting_load]         p_d0_mw, amplitude_pu, timescale_s
    [agc]                   k_agc_per_s, unit, enabled
    [synthetic_inertia]     p_max_mw, e_cap_mj, e_state_mj, k_derivative_mw_s_per_hz,
                            k_proportional_mw_per_hz, filter_fc_hz, pv_mean_mw, pv_peak_mw,
                            soc_gain_per_s
    [histogram]             bins, range_mhz = lo, hi

Optional sections may be omitted; absent keys take the defaults below.
"""

from __future__ import annotations

import configparser
import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    DomainError,
    InvalidArgument,
    RegimeMismatch,
    ScenarioError,
    UnitMismatch,
)
from .grid import (
    F0_HZ,
    S_BASE_MVA,
    Agc,
    DriftingLoad,
    Generator,
    GridModel,
    GridRecord,
    GridState,
    StochasticLoad,
    SyntheticInertia,
    TurbineGovernor,
    ieee14_fleet,
    simulate_grid,
)
from .oracle import SimplifiedSystem, stationary_sigma, var_delta_omega, var_zero_damping, zero_damping_slope
from .sde import OuParams
from .stats import (
    DeadbandStats,
    Histogram,
    ModalityReport,
    SampleSeries,
    build_histogram,
    deadband_stats,
    default_range,
    modality,
)

DAY = 86400.0


@dataclass(frozen=True)
class GridScenario:
    label: str
    generators: tuple[Generator, ...]
    duration: float = DAY
    dt: float = 0.01
    warmup: float = 600.0
    seed: int = 1
    stochastic_load: StochasticLoad = StochasticLoad()
    d_l: float = 2.0
    drifting_load: DriftingLoad | None = None
    agc: Agc | None = None
    synthetic_inertia: SyntheticInertia | None = None
    inertia_multiplier: float = 1.0
    cadence: float = 1.0
    hist_bins: int = 101
    hist_range_mhz: tuple[float, float] | None = None

    def __post_init__(self):
        if self.duration < 3600:
            raise InvalidArgument(f"duration must be >= 3600 s, got {self.duration}")
        if not self.dt > 0:
            raise InvalidArgument("dt must be > 0")
        alpha = self.stochastic_load.ou.alpha
        if self.warmup < 10 / alpha:
            raise InvalidArgument(f"warmup {self.warmup} s is shorter than 10/alpha = {10 / alpha:g} s")
        if not self.inertia_multiplier > 0:
            raise InvalidArgument("inertia_multiplier must be > 0")
        for name, span in (("duration", self.duration), ("warmup", self.warmup), ("cadence", self.cadence)):
            if abs(round(span / self.dt) * self.dt - span) > 1e-9 * max(span, 1.0):
                raise InvalidArgument(f"{name} must be a multiple of dt")
        if abs(round(self.cadence / self.dt) * self.dt - self.cadence) > 1e-9 or self.cadence < self.dt:
            raise InvalidArgument("cadence must be a positive multiple of dt")
        if self.hist_range_mhz is not None and not self.hist_range_mhz[0] < self.hist_range_mhz[1]:
            raise InvalidArgument("histogram range must satisfy lo < hi")
        # validates fleet/AGC consistency
        self.model()

    def model(self) -> GridModel:
        gens = tuple(replace(g, h=g.h * self.inertia_multiplier) for g in self.generators)
        return GridModel(
            gens,
            self.stochastic_load,
            self.d_l,
            self.drifting_load,
            self.agc,
            self.synthetic_inertia,
        )

    @property
    def d_za_hz(self) -> float:
        """Widest governor dead-band in the fleet."""
        return max((g.tg.d_za_hz for g in self.generators if g.tg is not None), default=0.0)


# -- library ---------------------------------------------------------------------------

SI_DEVICE = SyntheticInertia(
    p_max_mw=2.0,
    e_cap_mj=160.0,
    e_state_mj=80.0,
    k_derivative=50.0,
    k_proportional=1000.0,
    filter_fc_hz=1000.0,
    pv_mean_mw=0.5,
    pv_peak_mw=1.0,
    soc_gain=0.01,
)


def builtin_scenarios() -> dict[str, GridScenario]:
    """The ten reference cases, keyed by label.

    With D_L = 0 the frequency wanders through the dead-band as a random walk
    whose traversal time ``d_za^2 / (b^2 P_L0^2 / (4 H^2 alpha^2))`` grows as
    H^2; the set-up interval is at least five traversal times so sampling
    starts from the stationary regime (3600 s at 10 x H, 4 days at 100 x H).
    """
    one_mw = StochasticLoad(1.0)
    drift = DriftingLoad(14.9, 0.12, DAY)
    db36 = ieee14_fleet(d_za_hz=0.036)
    out = [
        GridScenario("a", ieee14_fleet(), stochastic_load=one_mw, d_l=2.0),
        GridScenario("b", db36, stochastic_load=one_mw, d_l=2.0),
        GridScenario("c", db36, stochastic_load=one_mw, d_l=0.0),
        GridScenario("d", db36, stochastic_load=StochasticLoad(10.0), d_l=0.0),
        GridScenario("e", ieee14_fleet(d_za_hz=0.1), stochastic_load=one_mw, d_l=2.0, drifting_load=drift),
        GridScenario("f", db36, stochastic_load=one_mw, d_l=2.0, drifting_load=drift, agc=Agc(0.01, unit="G2")),
        GridScenario("g", db36, warmup=3600.0, stochastic_load=one_mw, d_l=0.0, inertia_multiplier=10.0),
        GridScenario("h", db36, duration=4 * DAY, warmup=3600.0, stochastic_load=one_mw, d_l=0.0,
                     inertia_multiplier=10.0),
        GridScenario("i", db36, duration=8 * DAY, warmup=4 * DAY, stochastic_load=one_mw, d_l=0.0,
                     inertia_multiplier=100.0),
        GridScenario("si", db36, dt=0.001, stochastic_load=one_mw, d_l=0.0, synthetic_inertia=SI_DEVICE),
    ]
    return {sc.label: sc for sc in out}


# -- file format -----------------------------------------------------------------------

# key -> (attribute, allowed unit suffix); the suffix is part of the key name
_SCENARIO_KEYS = {
    "label": ("label", None),
    "duration": ("duration", "s"),
    "dt": ("dt", "s"),
    "warmup": ("warmup", "s"),
    "seed": ("seed", None),
    "d_l": ("d_l", "pu"),
    "inertia_multiplier": ("inertia_multiplier", None),
    "cadence": ("cadence", "s"),
}
_GENERATOR_KEYS = {
    "h": "s",
    "rating": "mva",
    "governor": None,
    "droop": "pu",
    "t_servo": "s",
    "d_za": ("mhz", "hz", "pu"),
    "p_ref": "pu",
    "p_max": "pu",
}
_LOAD_KEYS = {
    "p_l0": "mw",
    "mu": "pu_per_s",
    "alpha": "per_s",
    "b": "pu_per_sqrt_s",
    "eta0": "pu",
    "gamma": None,
}
_DRIFT_KEYS = {"p_d0": "mw", "amplitude": "pu", "timescale": "s"}
_AGC_KEYS = {"k_agc": "per_s", "unit": None, "enabled": None}
_SI_KEYS = {
    "p_max": "mw",
    "e_cap": "mj",
    "e_state": "mj",
    "k_derivative": "mw_s_per_hz",
    "k_proportional": "mw_per_hz",
    "filter_fc": "hz",
    "pv_mean": "mw",
    "pv_peak": "mw",
    "soc_gain": "per_s",
}
_HIST_KEYS = {"bins": None, "range": "mhz"}
_KNOWN_UNITS = (
    "pu_per_sqrt_s", "pu_per_s", "mw_s_per_hz", "mw_per_hz", "per_s",
    "mva", "mhz", "hz", "mw", "mj", "pu", "kw", "kj", "khz", "ms", "s",
)


class _Source:
    """Raw text with a (section, key) -> line index for diagnostics."""

    def __init__(self, text: str):
        self.lines: dict[tuple[str, str], int] = {}
        section = ""
        for no, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            m = re.match(r"^\[(.+)\]$", line)
            if m:
                section = m.group(1).strip()
                self.lines.setdefault((section, ""), no)
                continue
            m = re.match(r"^([^=:;#\s][^=:]*?)\s*[=:]", line)
            if m:
                self.lines.setdefault((section, m.group(1).strip().lower()), no)

    def error(self, section: str, key: str, message: str, cls=ScenarioError):
        return cls(message, line=self.lines.get((section, key), self.lines.get((section, ""))), field=key or section)


def _split_key(key: str, table: dict):
    """Return (quantity, unit) for ``key`` or raise the right error class."""
    if key in table and table[key] is None:
        return key, None
    for q, allowed in table.items():
        if allowed is None or not key.startswith(q + "_"):
            continue
        unit = key[len(q) + 1 :]
        allowed_set = allowed if isinstance(allowed, tuple) else (allowed,)
        if unit in allowed_set:
            return q, unit
        if unit in _KNOWN_UNITS:
            return q, ("!", unit, allowed_set)
    return None, None


def _number(src: _Source, section: str, key: str, raw: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise src.error(section, key, f"not a number: {raw!r}") from None
    if not math.isfinite(value):
        raise src.error(section, key, f"not finite: {raw!r}")
    return value


def _bool(src: _Source, section: str, key: str, raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "yes", "true", "on"):
        return True
    if v in ("0", "no", "false", "off"):
        return False
    raise src.error(section, key, f"not a boolean: {raw!r}")


def _read_section(src: _Source, cp, section: str, table: dict) -> dict:
    out: dict[str, tuple[str | None, str]] = {}
    for key, raw in cp.items(section):
        q, unit = _split_key(key, table)
        if q is None:
            raise src.error(section, key, f"unknown key {key!r} in [{section}]")
        if isinstance(unit, tuple):
            _, got, allowed = unit
            raise src.error(
                section, key, f"unit {got!r} not accepted for {q!r}; use {', '.join(allowed)}", UnitMismatch
            )
        if q in out:
            raise src.error(section, key, f"{q!r} given more than once (in different units)", UnitMismatch)
        out[q] = (unit, raw)
    return out


def _d_za_hz(src, section, unit, raw) -> float:
    v = _number(src, section, f"d_za_{unit}", raw)
    if v < 0:
        raise src.error(section, f"d_za_{unit}", f"dead-band must be >= 0, got {v}")
    return {"mhz": v / 1000.0, "hz": v, "pu": v * F0_HZ}[unit]


def _checked(src, section, key, build):
    try:
        return build()
    except (InvalidArgument, DomainError) as exc:
        raise src.error(section, key, str(exc)) from None


def parse_scenario(text: str) -> GridScenario:
    """Parse scenario text; errors carry the offending line and field."""
    src = _Source(text)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ScenarioError(f"parse error: {exc}".splitlines()[0], line=line) from None

    known = {"scenario", "stochastic_load", "drifting_load", "agc", "synthetic_inertia", "histogram"}
    for section in cp.sections():
        if section not in known and not section.startswith("generator."):
            raise src.error(section, "", f"unknown section [{section}]")
    if "scenario" not in cp:
        raise ScenarioError("missing [scenario] section")

    # [scenario]
    kw: dict = {}
    for key, raw in cp.items("scenario"):
        q, unit = _split_key(key, {k: v[1] for k, v in _SCENARIO_KEYS.items()})
        if q is None:
            raise src.error("scenario", key, f"unknown key {key!r} in [scenario]")
        if isinstance(unit, tuple):
            raise src.error("scenario", key, f"unit {unit[1]!r} not accepted for {q!r}", UnitMismatch)
        attr = _SCENARIO_KEYS[q][0]
        if q == "label":
            kw[attr] = raw.strip()
        elif q == "seed":
            try:
                kw[attr] = int(raw)
            except ValueError:
                raise src.error("scenario", key, f"seed must be an integer, got {raw!r}") from None
            if not 0 <= kw[attr] < 2**64:
                raise src.error("scenario", key, "seed must be in [0, 2**64)")
        else:
            kw[attr] = _number(src, "scenario", key, raw)
    if "label" not in kw:
        raise src.error("scenario", "", "missing label")

    # generators
    gens = []
    for section in cp.sections():
        if not section.startswith("generator."):
            continue
        name = section.split(".", 1)[1]
        vals = _read_section(src, cp, section, _GENERATOR_KEYS)
        for req in ("h", "rating"):
            if req not in vals:
                raise src.error(section, "", f"[{section}] needs {req}_{_GENERATOR_KEYS[req]}")
        num = {q: _number(src, section, f"{q}_{u}", r) for q, (u, r) in vals.items() if q not in ("governor", "d_za")}
        governed = _bool(src, section, "governor", vals["governor"][1]) if "governor" in vals else False
        tg = None
        if governed:
            d_za = _d_za_hz(src, section, *vals["d_za"]) if "d_za" in vals else 0.0
            tg = _checked(src, section, "", lambda: TurbineGovernor(
                droop=num.get("droop", 0.05),
                t_servo=num.get("t_servo", 0.5),
                d_za_hz=d_za,
                p_ref=num.get("p_ref", 0.0),
                p_max=num.get("p_max"),
            ))
        else:
            extra = set(vals) - {"h", "rating", "governor"}
            if extra:
                key = sorted(extra)[0]
                raise src.error(section, f"{key}_{vals[key][0]}", f"{key} given for ungoverned unit {name}")
        gens.append(_checked(src, section, "", lambda: Generator(name, num["h"], num["rating"], tg)))
    if not gens:
        raise src.error("scenario", "", "no [generator.*] sections")

    def numbers(section, table):
        if section not in cp:
            return None
        vals = _read_section(src, cp, section, table)
        return {q: (raw if table[q] is None else _number(src, section, f"{q}_{u}", raw)) for q, (u, raw) in vals.items()}

    load = numbers("stochastic_load", _LOAD_KEYS) or {}
    ou = _checked(src, "stochastic_load", "", lambda: OuParams(
        mu=load.get("mu", 0.0), alpha=load.get("alpha", 0.5), b=load.get("b", 1.0), eta0=load.get("eta0", 0.0)))
    if "p_l0" in load and load["p_l0"] < 0:
        raise src.error("stochastic_load", "p_l0_mw", f"p_l0 must be >= 0, got {load['p_l0']}")
    gamma = _number(src, "stochastic_load", "gamma", load["gamma"]) if "gamma" in load else 0.0
    kw["stochastic_load"] = _checked(src, "stochastic_load", "", lambda: StochasticLoad(
        load.get("p_l0", 1.0), ou, gamma))

    drift = numbers("drifting_load", _DRIFT_KEYS)
    if drift is not None:
        if drift.get("timescale", 1.0) <= 0:
            raise src.error("drifting_load", "timescale_s", "timescale must be > 0")
        kw["drifting_load"] = DriftingLoad(drift.get("p_d0", 14.9), drift.get("amplitude", 0.12),
                                           drift.get("timescale", DAY))

    agc = numbers("agc", _AGC_KEYS)
    if agc is not None:
        kw["agc"] = Agc(
            agc.get("k_agc", 0.01),
            0.0,
            _bool(src, "agc", "enabled", agc["enabled"]) if "enabled" in agc else True,
            agc.get("unit", "G2").strip(),
        )

    si = numbers("synthetic_inertia", _SI_KEYS)
    if si is not None:
        mapping = {"p_max": "p_max_mw", "e_cap": "e_cap_mj", "e_state": "e_state_mj",
                   "filter_fc": "filter_fc_hz", "pv_mean": "pv_mean_mw", "pv_peak": "pv_peak_mw"}
        args = {mapping.get(q, q): v for q, v in si.items()}
        dev = _checked(src, "synthetic_inertia", "", lambda: SyntheticInertia(**args))
        if not 0 <= dev.e_state_mj <= dev.e_cap_mj:
            raise src.error("synthetic_inertia", "e_state_mj", "e_state must lie in [0, e_cap]")
        kw["synthetic_inertia"] = dev

    if "histogram" in cp:
        vals = _read_section(src, cp, "histogram", _HIST_KEYS)
        if "bins" in vals:
            try:
                kw["hist_bins"] = int(vals["bins"][1])
            except ValueError:
                raise src.error("histogram", "bins", "bins must be an integer") from None
            if kw["hist_bins"] < 2:
                raise src.error("histogram", "bins", "bins must be >= 2")
        if "range" in vals:
            parts = vals["range"][1].split(",")
            if len(parts) != 2:
                raise src.error("histogram", "range_mhz", "range needs 'lo, hi'")
            lo, hi = (_number(src, "histogram", "range_mhz", p) for p in parts)
            kw["hist_range_mhz"] = (lo, hi)

    kw["generators"] = tuple(gens)
    try:
        return GridScenario(**kw)
    except (InvalidArgument, DomainError, TypeError) as exc:
        raise ScenarioError(str(exc)) from None


def load_scenario(path) -> GridScenario:
    p = Path(path)
    if not p.is_file():
        raise ScenarioError(f"scenario file not found: {p}")
    return parse_scenario(p.read_text())


def resolve_scenario(name: str) -> GridScenario:
    """Built-in label (``b`` or ``scenario_b``) or a path to a scenario file."""
    lib = builtin_scenarios()
    key = name[len("scenario_"):] if name.startswith("scenario_") else name
    if key in lib:
        return lib[key]
    return load_scenario(name)


def _fmt(x: float) -> str:
    return repr(float(x))


def serialize_scenario(sc: GridScenario) -> str:
    lines = [
        "[scenario]",
        f"label = {sc.label}",
        f"duration_s = {_fmt(sc.duration)}",
        f"dt_s = {_fmt(sc.dt)}",
        f"warmup_s = {_fmt(sc.warmup)}",
        f"seed = {sc.seed}",
        f"d_l_pu = {_fmt(sc.d_l)}",
        f"inertia_multiplier = {_fmt(sc.inertia_multiplier)}",
        f"cadence_s = {_fmt(sc.cadence)}",
    ]
    for g in sc.generators:
        lines += ["", f"[generator.{g.name}]", f"h_s = {_fmt(g.h)}", f"rating_mva = {_fmt(g.rating_mva)}"]
        if g.tg is None:
            lines.append("governor = no")
            continue
        lines += [
            "governor = yes",
            f"droop_pu = {_fmt(g.tg.droop)}",
            f"t_servo_s = {_fmt(g.tg.t_servo)}",
            f"d_za_hz = {_fmt(g.tg.d_za_hz)}",
            f"p_ref_pu = {_fmt(g.tg.p_ref)}",
        ]
        if g.tg.p_max is not None:
            lines.append(f"p_max_pu = {_fmt(g.tg.p_max)}")
    sl = sc.stochastic_load
    lines += [
        "", "[stochastic_load]",
        f"p_l0_mw = {_fmt(sl.p_l0_mw)}",
        f"mu_pu_per_s = {_fmt(sl.ou.mu)}",
        f"alpha_per_s = {_fmt(sl.ou.alpha)}",
        f"b_pu_per_sqrt_s = {_fmt(sl.ou.b)}",
        f"eta0_pu = {_fmt(sl.ou.eta0)}",
        f"gamma = {_fmt(sl.gamma)}",
    ]
    if sc.drifting_load is not None:
        dl = sc.drifting_load
        lines += ["", "[drifting_load]", f"p_d0_mw = {_fmt(dl.p_d0_mw)}",
                  f"amplitude_pu = {_fmt(dl.amplitude)}", f"timescale_s = {_fmt(dl.timescale)}"]
    if sc.agc is not None:
        lines += ["", "[agc]", f"k_agc_per_s = {_fmt(sc.agc.k_agc)}", f"unit = {sc.agc.unit}",
                  f"enabled = {'yes' if sc.agc.enabled else 'no'}"]
    if sc.synthetic_inertia is not None:
        si = sc.synthetic_inertia
        lines += [
            "", "[synthetic_inertia]",
            f"p_max_mw = {_fmt(si.p_max_mw)}",
            f"e_cap_mj = {_fmt(si.e_cap_mj)}",
            f"e_state_mj = {_fmt(si.e_state_mj)}",
            f"k_derivative_mw_s_per_hz = {_fmt(si.k_derivative)}",
            f"k_proportional_mw_per_hz = {_fmt(si.k_proportional)}",
            f"filter_fc_hz = {_fmt(si.filter_fc_hz)}",
            f"pv_mean_mw = {_fmt(si.pv_mean_mw)}",
            f"pv_peak_mw = {_fmt(si.pv_peak_mw)}",
            f"soc_gain_per_s = {_fmt(si.soc_gain)}",
        ]
    lines += ["", "[histogram]", f"bins = {sc.hist_bins}"]
    if sc.hist_range_mhz is not None:
        lines.append(f"range_mhz = {_fmt(sc.hist_range_mhz[0])}, {_fmt(sc.hist_range_mhz[1])}")
    return "\n".join(lines) + "\n"


# -- oracle comparison -----------------------------------------------------------------


@dataclass(frozen=True)
class Criterion:
    name: str
    measured: float
    reference: float
    rel_error: float
    threshold: float
    passed: bool


@dataclass(frozen=True)
class ComparisonReport:
    system: SimplifiedSystem
    sigma: float | None
    criteria: tuple[Criterion, ...]
    notes: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    def to_text(self) -> str:
        s = self.system
        out = [
            f"oracle_h_s={s.h!r}",
            f"oracle_d_l_pu={s.d_l!r}",
            f"oracle_alpha_per_s={s.ou.alpha!r}",
            f"oracle_b_pu={s.ou.b!r}",
        ]
        if self.sigma is not None:
            out.append(f"oracle_sigma_pu={self.sigma!r}")
        out += list(self.notes)
        for c in self.criteria:
            out.append(
                f"criterion.{c.name}: measured={c.measured:.9g} reference={c.reference:.9g} "
                f"rel_error={c.rel_error:.4g} threshold={c.threshold:g} {'PASS' if c.passed else 'FAIL'}"
            )
        return "\n".join(out) + "\n"


def _criterion(name, measured, reference, threshold) -> Criterion:
    rel = abs(measured - reference) / abs(reference)
    return Criterion(name, float(measured), float(reference), float(rel), threshold, bool(rel <= threshold))


def growth_slope(series: SampleSeries, alpha: float, max_lag: float = 20.0) -> float:
    """Variance growth rate from increments of a zero-damping series.

    For the integrated OU load, ``E[(x(t+l) - x(t))^2] = slope (l - (1 - e^{-alpha l})/alpha)``;
    the slope is the zero-intercept least-squares fit over lags up to ``max_lag``.
    """
    lags = np.arange(1, int(max_lag / series.cadence) + 1)
    if len(lags) < 2 or lags[-1] >= series.count:
        raise InvalidArgument("series too short for the requested lags")
    x = series.values
    tau = lags * series.cadence
    v = np.array([np.mean((x[k:] - x[:-k]) ** 2) for k in lags])
    g = tau - (-np.expm1(-alpha * tau)) / alpha
    return float(g @ v / (g @ g))


def compare_with_oracle(
    series: SampleSeries,
    sys: SimplifiedSystem,
    ensemble: np.ndarray | None = None,
    ensemble_times: np.ndarray | None = None,
) -> ComparisonReport:
    """Check a linear-regime run against the closed forms.

    * pooled variance vs ``sigma^2`` (D_L > 0), 5 %
    * ensemble variance at ``ensemble_times`` vs the transient curve, 5 %
    * increment-based growth slope vs ``b^2 / (4 H^2 alpha^2)`` (D_L = 0), 10 %

    ``ensemble`` holds paths started from a deterministic state at t = 0,
    shape ``(len(ensemble_times), n_paths)``.
    """
    if series.meta.get("nonlinear"):
        raise RegimeMismatch(f"series is not from the linear regime: {series.meta['nonlinear']}")
    d_za = series.meta.get("deadband")
    if d_za is not None and np.any(np.abs(series.values) > d_za):
        n = int(np.count_nonzero(np.abs(series.values) > d_za))
        raise RegimeMismatch(f"dead-band active: {n} of {series.count} samples exceed {d_za:g} {series.unit}")
    if series.unit != "pu":
        series = series.to("pu")
    crit = []
    sigma = None
    if sys.d_l > 0:
        sigma = stationary_sigma(sys)
        crit.append(_criterion("stationary_variance", float(np.var(series.values)), sigma**2, 0.05))
    else:
        crit.append(_criterion("growth_slope", growth_slope(series, sys.ou.alpha), zero_damping_slope(sys), 0.10))
    if ensemble is not None:
        times = np.asarray(ensemble_times, dtype=float)
        emp = np.var(np.asarray(ensemble), axis=1)
        ref = var_delta_omega(times, sys) if sys.d_l > 0 else var_zero_damping(times, sys)
        rel = np.abs(emp - ref) / np.abs(ref)
        worst = int(np.argmax(rel))
        crit.append(Criterion("transient_variance", float(emp[worst]), float(ref[worst]), float(rel[worst]),
                              0.05, bool(rel[worst] <= 0.05)))
    return ComparisonReport(sys, sigma, tuple(crit), tuple(series.meta.get("notes", ())))


# -- running ---------------------------------------------------------------------------


def linear_reduction(sc: GridScenario) -> tuple[SimplifiedSystem, tuple[str, ...]]:
    """Two-state model with the scenario's aggregate values on the system base."""
    model = sc.model()
    ou = sc.stochastic_load.ou
    p_pu = sc.stochastic_load.p_l0_mw / S_BASE_MVA
    sys = SimplifiedSystem(model.h_total, sc.d_l, OuParams(ou.mu * p_pu, ou.alpha, ou.b * p_pu, ou.eta0 * p_pu))
    notes = (
        f"conversion: p_l0 {sc.stochastic_load.p_l0_mw!r} MW / {S_BASE_MVA!r} MVA = {p_pu!r} pu",
        f"conversion: h_total = sum(h_i * rating_i) / {S_BASE_MVA!r} MVA = {model.h_total!r} s",
    )
    return sys, notes


def _nonlinear_features(sc: GridScenario, wear: np.ndarray) -> str:
    feats = []
    if sc.agc is not None and sc.agc.enabled:
        feats.append("AGC")
    if sc.synthetic_inertia is not None:
        feats.append("synthetic inertia")
    if sc.drifting_load is not None:
        feats.append("drifting load")
    if sc.stochastic_load.ou.mu != 0:
        feats.append("nonzero load drift mu")
    if any(g.tg is not None and g.tg.d_za_hz == 0 for g in sc.generators):
        feats.append("governor droop without dead-band")
    if int(np.sum(wear)) > 0:
        feats.append(f"governor dead-band crossed {int(np.sum(wear))} times")
    return ", ".join(feats)


@dataclass(eq=False)
class ScenarioResult:
    scenario: GridScenario
    series: SampleSeries
    record: GridRecord
    state: GridState
    histogram: Histogram
    modality: ModalityReport
    deadband: DeadbandStats
    summary: dict = field(default_factory=dict)
    comparison: ComparisonReport | None = None

    def series_mhz(self) -> SampleSeries:
        return self.series.to("mHz")

    def report_text(self) -> str:
        out = [f"label={self.scenario.label}", f"seed={self.scenario.seed}"]
        out += [f"{k}={v}" for k, v in self.summary.items()]
        out.append(self.modality.to_text().rstrip())
        out.append(self.deadband.to_text().rstrip())
        if self.comparison is not None:
            out.append(self.comparison.to_text().rstrip())
        else:
            out.append("oracle_comparison=not applicable (" + self.summary.get("nonlinear", "") + ")")
        return "\n".join(out) + "\n"


def run(sc: GridScenario, duration: float | None = None) -> ScenarioResult:
    """Warm up, then sample every ``cadence`` seconds for ``duration``."""
    if duration is not None:
        sc = replace(sc, duration=duration)
    model = sc.model()
    state = model.initial_state(sc.seed)
    state, _ = simulate_grid(model, state, sc.dt, int(round(sc.warmup / sc.dt)))
    start_wear = state.wear.copy()
    stride = int(round(sc.cadence / sc.dt))
    n_steps = int(round(sc.duration / sc.dt))
    state, rec = simulate_grid(model, state, sc.dt, n_steps, stride=stride)

    wear = state.wear - start_wear
    nonlinear = _nonlinear_features(sc, state.wear)
    d_za_pu = sc.d_za_hz / F0_HZ
    meta = {"nonlinear": nonlinear, "deadband": d_za_pu if d_za_pu > 0 else None}
    series = SampleSeries(sc.warmup, sc.cadence, rec.delta_omega, "pu", meta)
    mhz = series.to("mHz")
    rng = sc.hist_range_mhz or default_range(mhz, sc.d_za_hz * 1000.0)
    hist = build_histogram(mhz, sc.hist_bins, rng)
    mod = modality(hist)
    db = deadband_stats(mhz, sc.d_za_hz * 1000.0)

    summary = {
        "samples": series.count,
        "h_total_s": repr(model.h_total),
        "d_za_mhz": repr(sc.d_za_hz * 1000.0),
        "std_mhz": repr(float(np.std(mhz.values))),
        "mean_mhz": repr(float(np.mean(mhz.values))),
        "underflow": hist.underflow,
        "overflow": hist.overflow,
        "wear_events": ";".join(f"{g.name}:{int(w)}" for g, w in zip(sc.generators, wear) if g.tg is not None),
        "nonlinear": nonlinear or "none",
    }
    if sc.synthetic_inertia is not None:
        p = rec.p_si_mw
        summary.update(
            si_energy_min_mj=repr(rec.energy_min_mj),
            si_energy_max_mj=repr(rec.energy_max_mj),
            si_power_mean_mw=repr(float(p.mean())),
            si_power_std_mw=repr(float(p.std())),
            si_power_abs_max_mw=repr(float(np.abs(p).max())),
        )
    comparison = None
    if not nonlinear:
        sys, notes = linear_reduction(sc)
        series.meta["notes"] = notes
        comparison = compare_with_oracle(series, sys)
    return ScenarioResult(sc, series, rec, state, hist, mod, db, summary, comparison)


def worker_count() -> int:
    env = os.environ.get("FREQLAB_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise InvalidArgument(f"FREQLAB_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise InvalidArgument("FREQLAB_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def run_many(scenarios, workers: int | None = None) -> list[ScenarioResult]:
    """Run scenarios in a thread pool; results come back in input order."""
    scenarios = list(scenarios)
    workers = workers or worker_count()
    if workers == 1 or len(scenarios) == 1:
        return [run(sc) for sc in scenarios]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, scenarios))
