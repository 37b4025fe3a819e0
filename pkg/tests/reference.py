"""Independent reference implementations used as test oracles.

Nothing here imports freqlab internals: each routine re-derives its result
by a different code path (pure Python integers, scipy quadrature and integrators).
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, linalg

M32 = 0xFFFFFFFF


def philox4x32_10(ctr, key):
    """Philox4x32-10 in plain Python integers (Salmon et al., Random123)."""
    c = list(ctr)
    k0, k1 = key
    for r in range(10):
        if r:
            k0 = (k0 + 0x9E3779B9) & M32
            k1 = (k1 + 0xBB67AE85) & M32
        p0 = 0xD2511F53 * c[0]
        p1 = 0xCD9E8D57 * c[2]
        c = [
            ((p1 >> 32) ^ c[1] ^ k0) & M32,
            p1 & M32,
            ((p0 >> 32) ^ c[3] ^ k1) & M32,
            p0 & M32,
        ]
    return tuple(c)


def normal_ref(seed: int, counter: int) -> float:
    w = philox4x32_10((counter & M32, counter >> 32, 0, 0), (seed & M32, seed >> 32))
    u1 = ((w[0] >> 5) * 67108864 + (w[1] >> 6)) / 2.0**53
    u2 = ((w[2] >> 5) * 67108864 + (w[3] >> 6)) / 2.0**53
    return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)


def covariance_quadrature(a, b, t):
    """``int_0^t e^{-A s} B B^T e^{-A^T s} ds`` by adaptive quadrature."""
    qc = b @ b.T

    def f(s):
        e = linalg.expm(-a * s)
        return e @ qc @ e.T

    val, _ = integrate.quad_vec(f, 0.0, t, epsabs=1e-14, epsrel=1e-12)
    return val


def two_state_mean_ode(h, d_l, alpha, rho, psi, t_eval):
    """Mean of the two-state model with b = 0 by a high-order adaptive integrator."""

    def rhs(t, x):
        dw, eta = x
        return [(-d_l * dw - eta) / (2 * h), rho * math.sin(psi * t) - alpha * eta]

    sol = integrate.solve_ivp(rhs, (0.0, float(t_eval[-1])), [0.0, 0.0], method="DOP853",
                              t_eval=t_eval, rtol=1e-13, atol=1e-16)
    assert sol.success
    return sol.y[0]
