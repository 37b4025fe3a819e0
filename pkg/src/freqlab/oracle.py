"""Closed-form moments of the two-state model

    2H d(dw)/dt = -D_L dw - eta,     d eta = (mu - alpha eta) dt + b dW

used as ground truth for the simulators and for quick what-if queries.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateParameters, DomainError, InvalidArgument
from .sde import DriveTerm, LinearSde, OuParams, covariance_at

# Relative gap |2 H alpha - D_L| below which the closed-form variance is
# abandoned for the exact covariance solution.
NEAR_DEGENERATE = 1e-6


@dataclass(frozen=True)
class Sinusoid:
    rho: float
    psi: float

    def __post_init__(self):
        if not self.psi > 0:
            raise InvalidArgument(f"drive psi must be > 0, got {self.psi}")


@dataclass(frozen=True)
class SimplifiedSystem:
    h: float
    d_l: float
    ou: OuParams = OuParams()
    drive: Sinusoid | None = None

    def __post_init__(self):
        if not self.h > 0:
            raise InvalidArgument(f"H must be > 0, got {self.h}")
        if self.d_l < 0:
            raise InvalidArgument(f"D_L must be >= 0, got {self.d_l}")

    def to_linear_sde(self) -> LinearSde:
        h, d, p = self.h, self.d_l, self.ou
        a = np.array([[d / (2 * h), 1 / (2 * h)], [0.0, p.alpha]])
        b = np.array([[0.0], [p.b]])
        rho, psi = (self.drive.rho, self.drive.psi) if self.drive else (0.0, 0.0)
        drive = (DriveTerm(), DriveTerm(constant=p.mu, rho=rho, psi=psi))
        return LinearSde(a, b, drive, np.array([0.0, p.eta0]), ("delta_omega", "eta"))


@dataclass(frozen=True)
class AnalyticMoments:
    sigma: float
    kappa1: float
    kappa2: float
    kappa3: float
    rho_c: float
    rho_s: float
    k_const: float


def _gap(sys: SimplifiedSystem) -> float:
    return 2 * sys.h * sys.ou.alpha - sys.d_l


def _is_near_degenerate(sys: SimplifiedSystem) -> bool:
    two_h_alpha = 2 * sys.h * sys.ou.alpha
    return abs(two_h_alpha - sys.d_l) < NEAR_DEGENERATE * max(two_h_alpha, sys.d_l)


def stationary_sigma(sys: SimplifiedSystem) -> float:
    if sys.d_l == 0:
        raise DomainError("stationary sigma is unbounded for D_L = 0; use var_zero_damping(t, sys)")
    h, d, a, b = sys.h, sys.d_l, sys.ou.alpha, sys.ou.b
    return b / math.sqrt(2 * a * d * (d + 2 * h * a))


def _mean_coefficients(sys: SimplifiedSystem) -> tuple[float, float, float, float]:
    """(transient e^{-alpha t} coefficient, rho_c, rho_s, k)."""
    if sys.drive is None:
        return 0.0, 0.0, 0.0, 0.0
    h, d, a = sys.h, sys.d_l, sys.ou.alpha
    rho, psi = sys.drive.rho, sys.drive.psi
    denom = (4 * h**2 * psi**2 + d**2) * (a**2 + psi**2)
    rho_c = rho * psi * (2 * h * a + d) / denom
    rho_s = rho * (2 * h * psi**2 - a * d) / denom
    transient = rho * psi / ((a**2 + psi**2) * _gap(sys))
    k = -(transient + rho_c)
    return transient, rho_c, rho_s, k


def analytic_moments(sys: SimplifiedSystem) -> AnalyticMoments:
    if _is_near_degenerate(sys):
        raise DegenerateParameters(f"2*H*alpha = D_L = {sys.d_l}: closed form is singular")
    h, d, a, b = sys.h, sys.d_l, sys.ou.alpha, sys.ou.b
    sq = (d - 2 * h * a) ** 2
    sigma = stationary_sigma(sys) if d > 0 else math.inf
    transient, rho_c, rho_s, k = _mean_coefficients(sys)
    return AnalyticMoments(
        sigma=sigma,
        kappa1=2 * h * a * (d + 2 * h * a) / sq,
        kappa2=8 * h * a * d / sq,
        kappa3=b**2 / (2 * a * sq),
        rho_c=rho_c,
        rho_s=rho_s,
        k_const=k,
    )


def mean_delta_omega(t, sys: SimplifiedSystem, asymptotic: bool = False):
    """Expected frequency deviation under ``mu(t) = rho sin(psi t)``.

    The homogeneous mode decays as ``exp(-D_L t / 2H)``; ``k`` is fixed so
    the mean is zero at ``t = 0``.
    """
    if sys.ou.mu != 0 or sys.ou.eta0 != 0:
        raise DomainError("closed-form mean assumes mu = 0 and eta(0) = 0")
    t = np.asarray(t, dtype=float)
    if sys.drive is None or sys.drive.rho == 0:
        out = np.zeros_like(t)
        return float(out) if out.ndim == 0 else out
    if _is_near_degenerate(sys):
        raise DegenerateParameters(f"2*H*alpha = D_L = {sys.d_l}: closed-form mean is singular")
    transient, rho_c, rho_s, k = _mean_coefficients(sys)
    psi = sys.drive.psi
    out = rho_c * np.cos(psi * t) + rho_s * np.sin(psi * t)
    if not asymptotic:
        out = out + k * np.exp(-sys.d_l / (2 * sys.h) * t) + transient * np.exp(-sys.ou.alpha * t)
    return float(out) if out.ndim == 0 else out


def var_delta_omega(t, sys: SimplifiedSystem):
    """Transient variance of the frequency deviation from a deterministic start."""
    if sys.d_l == 0:
        raise DomainError("D_L = 0: use var_zero_damping(t, sys)")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise InvalidArgument("t must be >= 0")
    if _is_near_degenerate(sys):
        lin = sys.to_linear_sde()
        out = np.array([covariance_at(lin, float(tk))[0, 0] for tk in t_arr.ravel()]).reshape(t_arr.shape)
        return float(out) if out.ndim == 0 else out
    m = analytic_moments(sys)
    s2 = m.sigma**2
    slow = sys.d_l / (2 * sys.h)
    a = sys.ou.alpha
    # expm1 form: the constant terms cancel exactly at t = 0.
    out = (
        -s2 * m.kappa1 * np.expm1(-2 * slow * t_arr)
        + s2 * m.kappa2 * np.expm1(-(slow + a) * t_arr)
        - m.kappa3 * np.expm1(-2 * a * t_arr)
    )
    return float(out) if out.ndim == 0 else out


def _zero_damping_bracket(x: float) -> float:
    """``x + 2 e^{-x} - e^{-2x}/2 - 3/2`` without cancellation for small x."""
    if x < 0.1:
        return sum(
            (-1) ** n * (2.0 - 2.0 ** (n - 1)) / math.factorial(n) * x**n for n in range(3, 25)
        )
    return x + 2 * math.expm1(-x) - 0.5 * math.expm1(-2 * x)


def var_zero_damping(t, sys: SimplifiedSystem):
    """Variance for ``D_L = 0``; grows without bound, slope ``b^2 / (4 H^2 alpha^2)``."""
    if sys.d_l != 0:
        raise InvalidArgument(f"var_zero_damping requires D_L = 0, got {sys.d_l}")
    h, a, b = sys.h, sys.ou.alpha, sys.ou.b
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise InvalidArgument("t must be >= 0")
    scale = b**2 / (4 * h**2 * a**3)
    out = np.array([scale * _zero_damping_bracket(a * float(tk)) for tk in t_arr.ravel()]).reshape(t_arr.shape)
    return float(out) if out.ndim == 0 else out


def zero_damping_slope(sys: SimplifiedSystem) -> float:
    return sys.ou.b**2 / (4 * sys.h**2 * sys.ou.alpha**2)


class Effectiveness(enum.Enum):
    ALWAYS = "always-effective"


def inertia_effectiveness_threshold(alpha: float, d_l: float) -> float | Effectiveness:
    """Inertia above which the stationary spread falls below the noise level.

    ``(1 - 2 alpha D_L^2) / (4 alpha^2 D_L)``; a nonpositive value means any
    positive inertia already qualifies.
    """
    if d_l == 0:
        raise DomainError("D_L = 0: variance grows without bound whatever the inertia")
    if d_l < 0 or alpha <= 0:
        raise InvalidArgument("need alpha > 0 and D_L > 0")
    value = (1 - 2 * alpha * d_l**2) / (4 * alpha**2 * d_l)
    return Effectiveness.ALWAYS if value <= 0 else value
