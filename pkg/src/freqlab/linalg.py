"""Small dense matrix helpers: Padé matrix exponential and Van Loan blocks."""

from __future__ import annotations

import math

import numpy as np

from .errors import NumericalFailure


def _pade_order(tol: float) -> int:
    # Truncation bound for the diagonal [q/q] approximant on ||X|| <= 1/2
    # (Golub & Van Loan, Alg. 11.3.1).
    for q in range(1, 20):
        bound = 2.0 ** (3 - 2 * q) * math.factorial(q) ** 2 / (
            math.factorial(2 * q) * math.factorial(2 * q + 1)
        )
        if bound <= tol:
            return q
    raise ValueError(f"tolerance {tol} not reachable")


def expm(a, tol: float = 1e-12) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a diagonal Padé approximant.

    Raises NumericalFailure when the input is non-finite or the Padé
    denominator is too ill-conditioned to solve reliably.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expm needs a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericalFailure(f"expm: non-finite input entries\n{a}")
    n = a.shape[0]
    norm = np.linalg.norm(a, np.inf)
    j = max(0, int(math.ceil(math.log2(norm))) + 1) if norm > 0 else 0
    x = a / 2.0**j
    q = _pade_order(tol)

    c = 1.0
    ident = np.eye(n)
    num = ident.copy()
    den = ident.copy()
    power = ident.copy()
    sign = 1.0
    for k in range(1, q + 1):
        c = c * (q - k + 1) / (k * (2 * q - k + 1))
        power = power @ x
        sign = -sign
        num += c * power
        den += sign * c * power

    cond = np.linalg.cond(den)
    if not np.isfinite(cond) or cond > 1e12:
        raise NumericalFailure(
            f"expm: Padé denominator ill-conditioned (cond={cond:.3g}, "
            f"||A||_inf={norm:.3g}, scaling 2^{j})"
        )
    f = np.linalg.solve(den, num)
    for _ in range(j):
        f = f @ f
    if not np.all(np.isfinite(f)):
        raise NumericalFailure(f"expm: overflow while squaring (||A||_inf={norm:.3g})")
    return f


def discrete_noise(drift: np.ndarray, diffusion: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact one-step transition of ``dx = drift x dt + diffusion dW``.

    Returns ``(phi, q)`` with ``phi = exp(drift dt)`` and ``q`` the covariance
    accumulated over one step from a deterministic start, i.e. the solution
    at ``dt`` of ``w' = drift w + w drift^T + diffusion diffusion^T``, w(0)=0
    (Van Loan's block-exponential construction).
    """
    n = drift.shape[0]
    qc = diffusion @ diffusion.T
    # The block exponential carries exp(-drift dt) factors that cancel in q;
    # keep ||drift|| dt <= 1 and double up to the requested step.
    norm = np.linalg.norm(drift, np.inf) * dt
    doublings = max(0, int(math.ceil(math.log2(norm)))) if norm > 1 else 0
    h = dt / 2.0**doublings
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = -drift
    block[:n, n:] = qc
    block[n:, n:] = drift.T
    m = expm(block * h)
    phi = m[n:, n:].T
    q = phi @ m[:n, n:]
    q = 0.5 * (q + q.T)
    for _ in range(doublings):
        q = phi @ q @ phi.T + q
        q = 0.5 * (q + q.T)
        phi = phi @ phi
    return phi, q


def psd_factor(q: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Square factor ``l`` with ``l @ l.T == q`` for a symmetric PSD ``q``.

    Tiny negative eigenvalues from roundoff are clipped to zero; anything more
    negative than ``tol`` relative to the spectrum is reported.
    """
    vals, vecs = np.linalg.eigh(q)
    scale = max(float(np.max(np.abs(vals))), 1e-300)
    if vals.min() < -tol * scale and vals.min() < -1e-300:
        raise NumericalFailure(f"noise covariance not PSD: eigenvalues {vals}")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))
