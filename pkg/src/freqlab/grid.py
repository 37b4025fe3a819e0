"""Center-of-inertia grid model.

All machines share one frequency deviation ``dw`` (pu).  The swing balance on
the system base is

    2 H_tot d(dw)/dt = sum(dPm_i) - dP_load + P_si - D_L dw

stepped with explicit Euler, while the stochastic load advances with the exact
OU transition and governor servos with their exact first-order update.
Governors work in machine-base pu; everything else is system-base pu unless
the name carries a unit (``_mw``, ``_mj``, ``_hz``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .errors import InvalidArgument, InvariantViolation, SimulationDiverged
from .rng import NoiseStream, normal_at
from .sde import OuParams

S_BASE_MVA = 100.0
F0_HZ = 60.0
DIVERGENCE_PU = 0.1


# -- scalar laws shared by the public API and the kernel -------------------------


@numba.njit(cache=True)
def deadband(x, d_za):
    if x > d_za:
        return x - d_za
    if x < -d_za:
        return x + d_za
    return 0.0


@numba.njit(cache=True)
def _governor_command(p_ref, d_p, freq_dev, d_za, droop, p_min, p_max):
    cmd = p_ref + d_p - deadband(freq_dev, d_za) / droop
    return min(max(cmd, p_min), p_max)


@numba.njit(cache=True)
def _si_update(e, filt, dw, dwdt, dt, f0, k_d, k_p, decay, p_max, e_cap, pv_mean, pv_peak, soc_gain):
    """One synthetic-inertia step; returns (e, filt, p_inj, p_pv, p_bat) in MJ/MW."""
    filt = dwdt + (filt - dwdt) * decay
    raw = -k_d * filt * f0 - k_p * dw * f0
    p_cmd = min(max(raw, -p_max), p_max)
    p_pv = pv_mean
    if soc_gain > 0.0:
        p_pv = min(max(pv_mean + soc_gain * (0.5 * e_cap - e), 0.0), pv_peak)
    # Battery covers whatever the PV deviation does not; its energy stays
    # inside [0, e_cap] by construction.
    p_bat = p_cmd - (p_pv - pv_mean)
    p_bat = min(max(p_bat, -(e_cap - e) / dt), e / dt)
    p_inj = p_bat + (p_pv - pv_mean)
    e = e - p_bat * dt
    if e < 0.0:
        e = 0.0
    elif e > e_cap:
        e = e_cap
    return e, filt, p_inj, p_pv, p_bat


# -- components --------------------------------------------------------------------


def apply_deadband(x: float, d_za: float) -> float:
    """Offset dead-zone: zero inside ``[-d_za, d_za]``, shifted identity outside."""
    if d_za < 0:
        raise InvalidArgument(f"d_za must be >= 0, got {d_za}")
    return float(deadband(float(x), float(d_za)))


@dataclass(frozen=True)
class TurbineGovernor:
    droop: float = 0.05
    t_servo: float = 0.5
    d_za_hz: float = 0.0
    p_ref: float = 0.0
    d_p: float = 0.0
    state: float | None = None
    p_max: float | None = None
    f0: float = F0_HZ
    wear_events: int = 0
    band_active: bool = False

    def __post_init__(self):
        if not self.droop > 0:
            raise InvalidArgument(f"droop must be > 0, got {self.droop}")
        if not self.t_servo > 0:
            raise InvalidArgument(f"t_servo must be > 0, got {self.t_servo}")
        if self.d_za_hz < 0:
            raise InvalidArgument(f"d_za must be >= 0, got {self.d_za_hz}")
        if self.state is None:
            object.__setattr__(self, "state", self.p_ref)

    @property
    def d_za_pu(self) -> float:
        return self.d_za_hz / self.f0

    @property
    def limits(self) -> tuple[float, float]:
        if self.p_max is None:
            return -math.inf, math.inf
        return 0.0, self.p_max


def tg_step(tg: TurbineGovernor, freq_dev: float, dt: float) -> tuple[TurbineGovernor, float]:
    """Advance the governor servo by ``dt``; returns ``(governor, p_mech)``.

    A wear event is counted whenever the dead-band output switches between
    zero and nonzero.
    """
    if not dt > 0:
        raise InvalidArgument(f"dt must be > 0, got {dt}")
    if dt > tg.t_servo / 5:
        raise InvalidArgument(f"dt={dt} exceeds t_servo/5={tg.t_servo / 5}")
    lo, hi = tg.limits
    cmd = _governor_command(tg.p_ref, tg.d_p, freq_dev, tg.d_za_pu, tg.droop, lo, hi)
    state = cmd + (tg.state - cmd) * math.exp(-dt / tg.t_servo)
    active = deadband(freq_dev, tg.d_za_pu) != 0.0
    wear = tg.wear_events + (active != tg.band_active)
    return replace(tg, state=state, wear_events=wear, band_active=active), state


@dataclass(frozen=True)
class Generator:
    name: str
    h: float
    rating_mva: float
    tg: TurbineGovernor | None = None

    def __post_init__(self):
        if not self.h > 0:
            raise InvalidArgument(f"{self.name}: h must be > 0")
        if not self.rating_mva > 0:
            raise InvalidArgument(f"{self.name}: rating must be > 0")


@dataclass(frozen=True)
class Agc:
    k_agc: float = 0.01
    p_agc: float = 0.0
    enabled: bool = True
    unit: str = "G2"


def agc_step(agc: Agc, omega_coi: float, dt: float) -> Agc:
    """Integral action ``dP/dt = k (1 - omega)``, frozen when disabled."""
    if not dt > 0:
        raise InvalidArgument(f"dt must be > 0, got {dt}")
    if not agc.enabled:
        return agc
    return replace(agc, p_agc=agc.p_agc + agc.k_agc * (1.0 - omega_coi) * dt)


@dataclass(frozen=True)
class StochasticLoad:
    p_l0_mw: float = 1.0
    ou: OuParams = OuParams()
    gamma: float = 0.0
    v_ratio: float = 1.0

    def __post_init__(self):
        if self.p_l0_mw < 0:
            raise InvalidArgument("p_l0 must be >= 0")
        if self.v_ratio != 1.0:
            raise InvalidArgument("bus voltage is frozen at nominal (v_ratio = 1)")


@dataclass(frozen=True)
class DriftingLoad:
    p_d0_mw: float = 14.9
    amplitude: float = 0.12
    timescale: float = 86400.0

    def delta(self, t):
        return -self.amplitude * np.sin(np.asarray(t, dtype=float) / self.timescale)


def load_power(sl: StochasticLoad, dl: DriftingLoad | None, t: float, eta: float) -> float:
    """Total absorbed power in MW of the stochastic load plus the optional drifting load."""
    if t < 0:
        raise InvalidArgument("t must be >= 0")
    p = eta * sl.p_l0_mw * sl.v_ratio**sl.gamma
    if dl is not None:
        p += dl.p_d0_mw * (1.0 + float(dl.delta(t))) * sl.v_ratio**sl.gamma
    return float(p)


@dataclass(frozen=True)
class SyntheticInertia:
    """Power- and energy-limited converter emulating inertia and damping.

    ``k_derivative`` is in MW per Hz/s, ``k_proportional`` in MW per Hz.  The
    PV field runs at ``pv_mean`` below its ``pv_peak``; with ``soc_gain > 0``
    the PV set-point leans against the battery's state of charge so the
    battery is not driven into its limits by the slow part of the load.
    """

    p_max_mw: float = 2.0
    e_cap_mj: float = 160.0
    e_state_mj: float = 80.0
    k_derivative: float = 0.0
    k_proportional: float = 0.0
    filter_fc_hz: float = 1000.0
    pv_mean_mw: float = 0.5
    pv_peak_mw: float = 1.0
    soc_gain: float = 0.0
    f0: float = F0_HZ
    filtered_rate: float = 0.0
    p_pv_mw: float | None = None
    p_bat_mw: float = 0.0

    def __post_init__(self):
        if self.p_max_mw <= 0 or self.e_cap_mj <= 0:
            raise InvalidArgument("p_max and e_cap must be > 0")
        if not 0 <= self.pv_mean_mw <= self.pv_peak_mw:
            raise InvalidArgument("need 0 <= pv_mean <= pv_peak")
        if self.p_pv_mw is None:
            object.__setattr__(self, "p_pv_mw", self.pv_mean_mw)


def synthetic_inertia_step(
    si: SyntheticInertia, delta_omega: float, d_omega_dt: float, dt: float
) -> tuple[SyntheticInertia, float]:
    """Returns the updated device and the power injected into the grid (MW)."""
    if not dt > 0:
        raise InvalidArgument(f"dt must be > 0, got {dt}")
    if not 0 <= si.e_state_mj <= si.e_cap_mj:
        raise InvariantViolation(f"battery energy {si.e_state_mj} MJ outside [0, {si.e_cap_mj}]")
    decay = math.exp(-2 * math.pi * si.filter_fc_hz * dt)
    e, filt, p_inj, p_pv, p_bat = _si_update(
        si.e_state_mj, si.filtered_rate, delta_omega, d_omega_dt, dt, si.f0,
        si.k_derivative, si.k_proportional, decay, si.p_max_mw, si.e_cap_mj,
        si.pv_mean_mw, si.pv_peak_mw, si.soc_gain,
    )
    return replace(si, e_state_mj=e, filtered_rate=filt, p_pv_mw=p_pv, p_bat_mw=p_bat), p_inj


# -- aggregated model ----------------------------------------------------------------


def ieee14_fleet(h_multiplier: float = 1.0, d_za_hz: float = 0.0) -> tuple[Generator, ...]:
    """Two governed units and three synchronous condensers of the 14-bus case."""
    gov = dict(droop=0.05, t_servo=0.5, d_za_hz=d_za_hz)
    return (
        Generator("G1", 5.148 * h_multiplier, 615.0, TurbineGovernor(p_ref=232.4 / 615.0, **gov)),
        Generator("G2", 6.54 * h_multiplier, 60.0, TurbineGovernor(p_ref=40.0 / 60.0, **gov)),
        Generator("C3", 6.54 * h_multiplier, 60.0),
        Generator("C6", 5.06 * h_multiplier, 25.0),
        Generator("C8", 5.06 * h_multiplier, 25.0),
    )


@dataclass(frozen=True)
class GridModel:
    generators: tuple[Generator, ...]
    stochastic_load: StochasticLoad = StochasticLoad()
    d_l: float = 2.0
    drifting_load: DriftingLoad | None = None
    agc: Agc | None = None
    synthetic_inertia: SyntheticInertia | None = None
    f0: float = F0_HZ
    s_base_mva: float = S_BASE_MVA

    def __post_init__(self):
        if not self.generators:
            raise InvalidArgument("at least one generator required")
        if self.d_l < 0:
            raise InvalidArgument("d_l must be >= 0")
        if self.agc is not None and self.agc.unit not in [g.name for g in self.generators]:
            raise InvalidArgument(f"AGC unit {self.agc.unit!r} not in fleet")

    @property
    def h_total(self) -> float:
        """Inertia on the system base (s)."""
        return sum(g.h * g.rating_mva for g in self.generators) / self.s_base_mva

    def initial_state(self, seed: int = 0, t0: float = 0.0) -> GridState:
        gov = [g.tg for g in self.generators]
        si = self.synthetic_inertia
        return GridState(
            t=t0,
            delta_omega=0.0,
            eta=self.stochastic_load.ou.eta0,
            p_mech=np.array([tg.state if tg else 0.0 for tg in gov]),
            band_active=np.array([tg.band_active if tg else False for tg in gov]),
            wear=np.array([tg.wear_events if tg else 0 for tg in gov], dtype=np.int64),
            p_agc=self.agc.p_agc if self.agc else 0.0,
            si_rate=si.filtered_rate if si else 0.0,
            si_energy=si.e_state_mj if si else 0.0,
            d_omega_dt=0.0,
            stream=NoiseStream(seed),
        )


@dataclass(eq=False)
class GridState:
    t: float
    delta_omega: float
    eta: float
    p_mech: np.ndarray
    band_active: np.ndarray
    wear: np.ndarray
    p_agc: float
    si_rate: float
    si_energy: float
    d_omega_dt: float
    stream: NoiseStream

    def copy(self) -> GridState:
        return replace(
            self, p_mech=self.p_mech.copy(), band_active=self.band_active.copy(), wear=self.wear.copy()
        )


@dataclass(eq=False)
class GridRecord:
    """Quantities logged every ``stride`` steps (state *before* the step)."""

    t: np.ndarray
    delta_omega: np.ndarray
    mismatch: np.ndarray
    p_si_mw: np.ndarray
    p_bat_mw: np.ndarray
    si_energy_mj: np.ndarray
    energy_min_mj: float = math.nan
    energy_max_mj: float = math.nan
    extras: dict = field(default_factory=dict)


# scalar parameter slots for the kernel
(_DT, _H2, _DL, _F0, _SBASE, _PL0, _MU, _ALPHA, _B, _HAS_DRIFT, _PD0, _AMP, _TSCALE,
 _K_AGC, _AGC_ON, _AGC_UNIT, _SI_ON, _SI_KD, _SI_KP, _SI_DECAY, _SI_PMAX, _SI_ECAP,
 _SI_PVMEAN, _SI_PVPEAK, _SI_SOC, _N_PARAMS) = range(26)

# state slots
(_S_T, _S_DW, _S_ETA, _S_PAGC, _S_SIRATE, _S_SIE, _S_DWDT, _N_STATE) = range(8)


def _pack(model: GridModel, dt: float):
    gens = model.generators
    n = len(gens)
    gen = np.zeros((n, 8))
    for i, g in enumerate(gens):
        tg = g.tg
        gen[i, 0] = g.rating_mva / model.s_base_mva
        if tg is not None:
            lo, hi = tg.limits
            gen[i, 1] = 1.0
            gen[i, 2] = tg.droop
            gen[i, 3] = math.exp(-dt / tg.t_servo)
            gen[i, 4] = tg.d_za_hz / model.f0
            gen[i, 5] = tg.p_ref
            gen[i, 6] = lo
            gen[i, 7] = hi
    p = np.zeros(_N_PARAMS)
    p[_DT] = dt
    p[_H2] = 2.0 * model.h_total
    p[_DL] = model.d_l
    p[_F0] = model.f0
    p[_SBASE] = model.s_base_mva
    sl = model.stochastic_load
    p[_PL0] = sl.p_l0_mw / model.s_base_mva
    p[_MU], p[_ALPHA], p[_B] = sl.ou.mu, sl.ou.alpha, sl.ou.b
    if model.drifting_load is not None:
        dl = model.drifting_load
        p[_HAS_DRIFT] = 1.0
        p[_PD0] = dl.p_d0_mw / model.s_base_mva
        p[_AMP] = dl.amplitude
        p[_TSCALE] = dl.timescale
    p[_AGC_UNIT] = -1
    if model.agc is not None:
        p[_K_AGC] = model.agc.k_agc
        p[_AGC_ON] = 1.0 if model.agc.enabled else 0.0
        p[_AGC_UNIT] = [g.name for g in gens].index(model.agc.unit)
    si = model.synthetic_inertia
    if si is not None:
        p[_SI_ON] = 1.0
        p[_SI_KD] = si.k_derivative
        p[_SI_KP] = si.k_proportional
        p[_SI_DECAY] = math.exp(-2 * math.pi * si.filter_fc_hz * dt)
        p[_SI_PMAX] = si.p_max_mw
        p[_SI_ECAP] = si.e_cap_mj
        p[_SI_PVMEAN] = si.pv_mean_mw
        p[_SI_PVPEAK] = si.pv_peak_mw
        p[_SI_SOC] = si.soc_gain
    return gen, p


@numba.njit(cache=True, nogil=True)
def _grid_kernel(gen, p, s, p_mech, band, wear, seed, counter0, n_steps, stride,
                 rec_dw, rec_mis, rec_si, rec_bat, rec_e, e_range):
    """Advance the state in place. Returns (status, steps_done, counter, records)."""
    dt = p[_DT]
    n_gen = gen.shape[0]
    alpha = p[_ALPHA]
    ou_level = p[_MU] / alpha
    ou_decay = math.exp(-alpha * dt)
    ou_scale = p[_B] * math.sqrt(-math.expm1(-2.0 * alpha * dt) / (2.0 * alpha))
    agc_unit = int(p[_AGC_UNIT])
    ctr = np.uint64(counter0)
    r = 0
    t = s[_S_T]
    dw = s[_S_DW]
    eta = s[_S_ETA]
    p_agc = s[_S_PAGC]
    si_rate = s[_S_SIRATE]
    si_e = s[_S_SIE]
    dwdt = s[_S_DWDT]
    for k in range(n_steps):
        # loads
        dp_load = eta * p[_PL0]
        if p[_HAS_DRIFT] > 0.0:
            dp_load += p[_PD0] * (-p[_AMP] * math.sin(t / p[_TSCALE]))
        # synthetic inertia acts on the last computed rate of change
        p_inj = 0.0
        p_bat = 0.0
        if p[_SI_ON] > 0.0:
            si_e, si_rate, p_inj, p_pv, p_bat = _si_update(
                si_e, si_rate, dw, dwdt, dt, p[_F0], p[_SI_KD], p[_SI_KP], p[_SI_DECAY],
                p[_SI_PMAX], p[_SI_ECAP], p[_SI_PVMEAN], p[_SI_PVPEAK], p[_SI_SOC])
        # mechanical power from the current servo states
        dpm = 0.0
        for i in range(n_gen):
            if gen[i, 1] > 0.0:
                dpm += (p_mech[i] - gen[i, 5]) * gen[i, 0]
        mismatch = dpm - dp_load + p_inj / p[_SBASE]
        if stride > 0 and k % stride == 0:
            rec_dw[r] = dw
            rec_mis[r] = mismatch
            rec_si[r] = p_inj
            rec_bat[r] = p_bat
            rec_e[r] = si_e
            r += 1
        dwdt = (mismatch - p[_DL] * dw) / p[_H2]
        # governors see the frequency at the start of the step
        for i in range(n_gen):
            if gen[i, 1] > 0.0:
                d_p = 0.0
                if i == agc_unit:
                    d_p = p_agc / gen[i, 0]
                cmd = _governor_command(gen[i, 5], d_p, dw, gen[i, 4], gen[i, 2], gen[i, 6], gen[i, 7])
                p_mech[i] = cmd + (p_mech[i] - cmd) * gen[i, 3]
                active = deadband(dw, gen[i, 4]) != 0.0
                if active != band[i]:
                    wear[i] += 1
                    band[i] = active
        if p[_AGC_ON] > 0.0:
            p_agc += p[_K_AGC] * (-dw) * dt
        dw = dw + dt * dwdt
        eta = ou_level + (eta - ou_level) * ou_decay + ou_scale * normal_at(seed, ctr)
        ctr += np.uint64(1)
        t = t + dt
        if si_e < e_range[0]:
            e_range[0] = si_e
        if si_e > e_range[1]:
            e_range[1] = si_e
        if not abs(dw) <= 0.1:
            s[_S_T] = t
            s[_S_DW] = dw
            return 1, k + 1, ctr, r
    s[_S_T] = t
    s[_S_DW] = dw
    s[_S_ETA] = eta
    s[_S_PAGC] = p_agc
    s[_S_SIRATE] = si_rate
    s[_S_SIE] = si_e
    s[_S_DWDT] = dwdt
    return 0, n_steps, ctr, r


def simulate_grid(
    model: GridModel,
    state: GridState,
    dt: float,
    n_steps: int,
    stride: int = 0,
) -> tuple[GridState, GridRecord | None]:
    """Advance ``state`` by ``n_steps`` steps of ``dt``.

    With ``stride > 0`` the pre-step state is logged every ``stride`` steps.
    Raises SimulationDiverged when ``|dw|`` leaves the 0.1 pu guard.
    """
    if not dt > 0:
        raise InvalidArgument(f"dt must be > 0, got {dt}")
    for g in model.generators:
        if g.tg is not None and dt > g.tg.t_servo / 5:
            raise InvalidArgument(f"dt={dt} too large for servo of {g.name}")
    si = model.synthetic_inertia
    if si is not None and not 0 <= state.si_energy <= si.e_cap_mj:
        raise InvariantViolation(f"battery energy {state.si_energy} MJ outside [0, {si.e_cap_mj}]")
    gen, p = _pack(model, dt)
    new = state.copy()
    s = np.array([new.t, new.delta_omega, new.eta, new.p_agc, new.si_rate, new.si_energy,
                  new.d_omega_dt])
    n_rec = (n_steps + stride - 1) // stride if stride > 0 else 0
    rec = [np.empty(n_rec) for _ in range(5)]
    e_range = np.array([new.si_energy, new.si_energy])
    status, done, ctr, r = _grid_kernel(
        gen, p, s, new.p_mech, new.band_active, new.wear, np.uint64(new.stream.seed), np.uint64(new.stream.counter),
        int(n_steps), int(stride), *rec, e_range)
    if status != 0:
        raise SimulationDiverged(
            f"|delta_omega| = {abs(s[_S_DW]):.4g} pu exceeded {DIVERGENCE_PU} pu at t = {s[_S_T]:.3f} s"
        )
    new.t, new.delta_omega, new.eta, new.p_agc, new.si_rate, new.si_energy, new.d_omega_dt = (
        float(v) for v in s)
    new.stream = NoiseStream(new.stream.seed, int(ctr))
    record = None
    if stride > 0:
        t_rec = state.t + np.arange(n_rec) * stride * dt
        record = GridRecord(t_rec, *rec, energy_min_mj=float(e_range[0]), energy_max_mj=float(e_range[1]))
    return new, record


def step_grid(model: GridModel, state: GridState, dt: float) -> GridState:
    """One step of the aggregated model; the noise position lives in ``state.stream``."""
    return simulate_grid(model, state, dt, 1)[0]
