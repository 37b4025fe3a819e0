"""Linear SDE machinery: exact OU stepping, exact discretization of
``dx = (mu(t) - A x) dt + B dW`` and covariance propagation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from .errors import InvalidArgument, NumericalFailure
from .linalg import discrete_noise, expm, psd_factor
from .rng import NoiseStream, gaussians, normal_at


@dataclass(frozen=True)
class OuParams:
    """Ornstein-Uhlenbeck load process ``d eta = (mu - alpha eta) dt + b dW``."""

    mu: float = 0.0
    alpha: float = 0.5
    b: float = 1.0
    eta0: float = 0.0

    def __post_init__(self):
        for name in ("mu", "alpha", "b", "eta0"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidArgument(f"OuParams.{name} must be finite")
        if self.alpha <= 0:
            raise InvalidArgument(f"OuParams.alpha must be > 0, got {self.alpha}")
        if self.b < 0:
            raise InvalidArgument(f"OuParams.b must be >= 0, got {self.b}")

    @property
    def stationary_var(self) -> float:
        return self.b**2 / (2.0 * self.alpha)


@dataclass(frozen=True)
class DriveTerm:
    """One entry of the drive vector: ``constant + rho * sin(psi * t)``."""

    constant: float = 0.0
    rho: float = 0.0
    psi: float = 0.0

    def __post_init__(self):
        if self.psi < 0:
            raise InvalidArgument(f"sinusoid psi must be >= 0, got {self.psi}")

    def __call__(self, t):
        return self.constant + self.rho * np.sin(self.psi * np.asarray(t, dtype=float))


@dataclass(frozen=True, eq=False)
class LinearSde:
    a: np.ndarray
    b: np.ndarray
    drive: tuple[DriveTerm, ...] = ()
    x0: np.ndarray | None = None
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        n = a.shape[0]
        if a.shape != (n, n) or n < 1:
            raise InvalidArgument(f"A must be square, got {a.shape}")
        if b.shape[0] != n or b.shape[1] < 1:
            raise InvalidArgument(f"B must be {n}xM with M >= 1, got {b.shape}")
        drive = tuple(self.drive) or tuple(DriveTerm() for _ in range(n))
        if len(drive) != n:
            raise InvalidArgument(f"drive needs {n} entries, got {len(drive)}")
        x0 = np.zeros(n) if self.x0 is None else np.asarray(self.x0, dtype=float).reshape(n)
        labels = tuple(self.labels) or tuple(f"x{i}" for i in range(n))
        if len(labels) != n:
            raise InvalidArgument("one label per state required")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "drive", drive)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def with_drive(self, drive: Sequence[DriveTerm]) -> LinearSde:
        return LinearSde(self.a, self.b, tuple(drive), self.x0, self.labels)

    def drive_at(self, t: np.ndarray) -> np.ndarray:
        """Drive vector at each time, shape ``(len(t), N)``."""
        t = np.asarray(t, dtype=float)
        return np.stack([d(t) for d in self.drive], axis=-1)


@dataclass(eq=False)
class Trajectory:
    t: np.ndarray
    states: np.ndarray
    labels: tuple[str, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim == 1:
            self.states = self.states[:, None]
        if len(self.t) != len(self.states):
            raise InvalidArgument("len(t) must equal len(states)")
        if len(self.t) > 1 and not np.all(np.diff(self.t) > 0):
            raise InvalidArgument("time stamps must be strictly increasing")
        if self.states.shape[1] != len(self.labels):
            raise InvalidArgument("one label per state component required")
        if not (np.all(np.isfinite(self.t)) and np.all(np.isfinite(self.states))):
            raise NumericalFailure("trajectory contains NaN/Inf")

    def __len__(self) -> int:
        return len(self.t)

    def component(self, label: str | int) -> np.ndarray:
        idx = label if isinstance(label, int) else self.labels.index(label)
        return self.states[:, idx]

    def to_csv(self, path) -> None:
        data = np.column_stack([self.t, self.states])
        header = ",".join(("t",) + tuple(self.labels))
        np.savetxt(Path(path), data, delimiter=",", header=header, comments="", fmt="%.17g")


# -- Ornstein-Uhlenbeck ------------------------------------------------------


def ou_exact_step(eta, p: OuParams, dt: float, stream: NoiseStream):
    """Advance ``eta`` (scalar or array of independent paths) by ``dt``.

    Exact in distribution for any ``dt``.  Returns ``(eta_next, stream_next)``;
    an array input consumes one counter per element.
    """
    if not dt > 0:
        raise InvalidArgument(f"dt must be > 0, got {dt}")
    eta_arr = np.asarray(eta, dtype=float)
    xi, stream = gaussians(stream, eta_arr.size)
    xi = xi.reshape(eta_arr.shape)
    level = p.mu / p.alpha
    decay = math.exp(-p.alpha * dt)
    scale = p.b * math.sqrt(-math.expm1(-2.0 * p.alpha * dt) / (2.0 * p.alpha))
    out = level + (eta_arr - level) * decay + scale * xi
    if np.ndim(eta) == 0:
        return float(out), stream
    return out, stream


def ou_moments(t: float, p: OuParams) -> tuple[float, float]:
    if t < 0:
        raise InvalidArgument(f"t must be >= 0, got {t}")
    level = p.mu / p.alpha
    mean = level + (p.eta0 - level) * math.exp(-p.alpha * t)
    var = -(p.b**2 / (2.0 * p.alpha)) * math.expm1(-2.0 * p.alpha * t)
    return mean, var


# -- linear SDE integration --------------------------------------------------


def _augmented_drift(sys: LinearSde) -> np.ndarray:
    """Drift of ``[x; aux]`` where aux holds ``(1, sin, cos)`` per drive entry."""
    n = sys.n
    f = np.zeros((4 * n, 4 * n))
    f[:n, :n] = -sys.a
    for i, d in enumerate(sys.drive):
        one, s, c = n + 3 * i, n + 3 * i + 1, n + 3 * i + 2
        f[i, one] = d.constant
        f[i, s] = d.rho
        f[s, c] = d.psi
        f[c, s] = -d.psi
    return f


def _aux_at(sys: LinearSde, t: np.ndarray) -> np.ndarray:
    cols = []
    for d in sys.drive:
        cols += [np.ones_like(t), np.sin(d.psi * t), np.cos(d.psi * t)]
    return np.stack(cols, axis=-1)


def _n_steps(horizon: float, dt: float) -> int:
    if not dt > 0:
        raise InvalidArgument(f"dt must be > 0, got {dt}")
    if horizon < dt:
        raise InvalidArgument(f"horizon {horizon} shorter than dt {dt}")
    n = int(round(horizon / dt))
    if abs(n * dt - horizon) > 1e-9 * max(horizon, 1.0):
        raise InvalidArgument(f"horizon {horizon} is not a multiple of dt {dt}")
    return n


@numba.njit(cache=True)
def _affine_recurrence(phi, x0, inc, factor, seed, counter0, out):
    n_steps = inc.shape[0]
    n = x0.shape[0]
    m = factor.shape[1]
    xi = np.empty(m)
    for j in range(n):
        out[0, j] = x0[j]
    ctr = np.uint64(counter0)
    for k in range(n_steps):
        for j in range(m):
            xi[j] = normal_at(seed, ctr)
            ctr += np.uint64(1)
        for i in range(n):
            acc = inc[k, i]
            for j in range(n):
                acc += phi[i, j] * out[k, j]
            for j in range(m):
                acc += factor[i, j] * xi[j]
            out[k + 1, i] = acc
    return ctr


def exact_transition(sys: LinearSde, dt: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(phi, drive_gain, q)`` for one exact step of length ``dt``.

    The deterministic increment over ``[t, t+dt]`` is ``drive_gain @ aux(t)``.
    """
    n = sys.n
    big = expm(_augmented_drift(sys) * dt)
    phi = big[:n, :n]
    gain = big[:n, n:]
    _, q = discrete_noise(-sys.a, sys.b, dt)
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(q))):
        raise NumericalFailure(f"non-finite exact transition for dt={dt}: phi={phi}, q={q}")
    return phi, gain, q


def simulate_linear(
    sys: LinearSde,
    horizon: float,
    dt: float,
    stream: NoiseStream,
    method: str = "exact",
) -> Trajectory:
    """Sample path of the linear SDE on ``[0, horizon]`` at spacing ``dt``.

    ``method="exact"`` uses the Gaussian transition (matrix exponential plus
    one-step noise covariance), free of step-size bias.  ``method="euler"``
    is plain Euler-Maruyama, kept for cross-checks.
    """
    n_steps = _n_steps(horizon, dt)
    t = np.arange(n_steps + 1) * dt
    n = sys.n
    if method == "exact":
        phi, gain, q = exact_transition(sys, dt)
        inc = _aux_at(sys, t[:-1]) @ gain.T
        factor = psd_factor(q)
    elif method == "euler":
        phi = np.eye(n) - sys.a * dt
        inc = sys.drive_at(t[:-1]) * dt
        factor = sys.b * math.sqrt(dt)
    else:
        raise InvalidArgument(f"unknown method {method!r}")
    out = np.empty((n_steps + 1, n))
    _affine_recurrence(phi, sys.x0, np.ascontiguousarray(inc), np.ascontiguousarray(factor),
                       np.uint64(stream.seed), np.uint64(stream.counter), out)
    if not np.all(np.isfinite(out)):
        raise NumericalFailure("linear simulation produced non-finite states")
    return Trajectory(t, out, sys.labels, meta={"method": method, "dt": dt, "seed": stream.seed})


@numba.njit(cache=True)
def _ensemble_kernel(phi, x0, inc, factor, seeds, record_at, out):
    n_paths = seeds.shape[0]
    n = x0.shape[0]
    m = factor.shape[1]
    n_steps = inc.shape[0]
    x = np.empty(n)
    y = np.empty(n)
    xi = np.empty(m)
    for p in range(n_paths):
        for i in range(n):
            x[i] = x0[i]
        ctr = np.uint64(0)
        r = 0
        if record_at[0] == 0:
            for i in range(n):
                out[0, p, i] = x[i]
            r = 1
        for k in range(n_steps):
            for j in range(m):
                xi[j] = normal_at(seeds[p], ctr)
                ctr += np.uint64(1)
            for i in range(n):
                acc = inc[k, i]
                for j in range(n):
                    acc += phi[i, j] * x[j]
                for j in range(m):
                    acc += factor[i, j] * xi[j]
                y[i] = acc
            for i in range(n):
                x[i] = y[i]
            while r < record_at.shape[0] and record_at[r] == k + 1:
                for i in range(n):
                    out[r, p, i] = x[i]
                r += 1


def simulate_ensemble(
    sys: LinearSde,
    times: Sequence[float],
    dt: float,
    stream: NoiseStream,
    n_paths: int,
    method: str = "exact",
) -> np.ndarray:
    """States of ``n_paths`` independent paths at ``times``; shape ``(T, paths, N)``.

    Path ``p`` draws from ``stream.split(p)``.
    """
    times = np.asarray(times, dtype=float)
    horizon = float(times.max())
    n_steps = _n_steps(horizon, dt)
    idx = np.rint(times / dt).astype(np.int64)
    if np.any(np.abs(idx * dt - times) > 1e-9 * max(horizon, 1.0)) or np.any(np.diff(idx) < 0):
        raise InvalidArgument("record times must be ascending multiples of dt")
    t = np.arange(n_steps) * dt
    if method == "exact":
        phi, gain, q = exact_transition(sys, dt)
        inc = _aux_at(sys, t) @ gain.T
        factor = psd_factor(q)
    elif method == "euler":
        phi = np.eye(sys.n) - sys.a * dt
        inc = sys.drive_at(t) * dt
        factor = sys.b * math.sqrt(dt)
    else:
        raise InvalidArgument(f"unknown method {method!r}")
    seeds = np.array([stream.split(p).seed for p in range(n_paths)], dtype=np.uint64)
    out = np.empty((len(idx), n_paths, sys.n))
    _ensemble_kernel(phi, sys.x0, np.ascontiguousarray(inc), np.ascontiguousarray(factor),
                     seeds, idx, out)
    return out


# -- covariance ----------------------------------------------------------------


@numba.njit(cache=True)
def _lyapunov_rk4(a, qc, w0, dt, n_steps, out):
    def rhs(w):
        return -(a @ w + w @ a.T) + qc

    w = w0.copy()
    out[0] = w
    for k in range(n_steps):
        k1 = rhs(w)
        k2 = rhs(w + 0.5 * dt * k1)
        k3 = rhs(w + 0.5 * dt * k2)
        k4 = rhs(w + dt * k3)
        w = w + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        w = 0.5 * (w + w.T)
        out[k + 1] = w


def propagate_covariance(
    sys: LinearSde, w0, horizon: float, dt: float, psd_tol: float = 1e-12
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate ``w' = -(A w + w A^T) + B B^T`` with classical RK4.

    Returns ``(t, w)`` with ``w`` of shape ``(steps + 1, N, N)``.  The drive
    never enters, so the result depends on ``A``, ``B`` and ``w0`` only.
    """
    w0 = np.asarray(w0, dtype=float)
    n = sys.n
    if w0.shape != (n, n):
        raise InvalidArgument(f"w0 must be {n}x{n}, got {w0.shape}")
    if not np.array_equal(w0, w0.T):
        raise InvalidArgument("w0 must be symmetric")
    eig = np.linalg.eigvalsh(w0)
    if eig.min() < -psd_tol * max(1.0, float(np.abs(eig).max())):
        raise InvalidArgument(f"w0 must be positive semidefinite, eigenvalues {eig}")
    n_steps = _n_steps(horizon, dt)
    out = np.empty((n_steps + 1, n, n))
    _lyapunov_rk4(np.ascontiguousarray(sys.a), sys.b @ sys.b.T, w0.copy(), float(dt), n_steps, out)
    if not np.all(np.isfinite(out)):
        raise NumericalFailure("covariance propagation diverged")
    diag = np.diagonal(out, axis1=1, axis2=2)
    if diag.min() < -psd_tol:
        k = int(np.argmin(diag.min(axis=1)))
        raise NumericalFailure(f"covariance lost positivity at t={k * dt}: diag={diag[k]}")
    return np.arange(n_steps + 1) * dt, out


def stationary_covariance(sys: LinearSde) -> np.ndarray:
    """Solution of the algebraic balance ``A w + w A^T = B B^T``."""
    from scipy.linalg import solve_continuous_lyapunov

    return solve_continuous_lyapunov(sys.a, sys.b @ sys.b.T)


def covariance_at(sys: LinearSde, t: float) -> np.ndarray:
    """Exact covariance at ``t`` from a deterministic start (Van Loan)."""
    if t == 0:
        return np.zeros((sys.n, sys.n))
    _, q = discrete_noise(-sys.a, sys.b, t)
    return q
