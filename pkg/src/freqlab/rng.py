"""Counter-based Gaussian noise.

Every variate is a pure function of ``(seed, counter)``: the 64-bit seed is the
Philox4x32-10 key and the counter is the block index, so any draw can be
recomputed in isolation and parallel workers never share state.  Two 53-bit
uniforms from one Philox block feed a Box-Muller transform (cosine branch).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / 9007199254740992.0

SEED_LIMIT = 1 << 64


@numba.njit(cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32 with 10 rounds; all words are uint32 values held in uint64."""
    c0 = np.uint64(c0)
    c1 = np.uint64(c1)
    c2 = np.uint64(c2)
    c3 = np.uint64(c3)
    k0 = np.uint64(k0)
    k1 = np.uint64(k1)
    for i in range(10):
        if i > 0:
            k0 = (k0 + _W0) & _MASK32
            k1 = (k1 + _W1) & _MASK32
        p0 = _M0 * c0
        p1 = _M1 * c2
        n0 = (p1 >> _SHIFT32) ^ c1 ^ k0
        n2 = (p0 >> _SHIFT32) ^ c3 ^ k1
        c0 = n0
        c1 = p1 & _MASK32
        c2 = n2
        c3 = p0 & _MASK32
    return c0, c1, c2, c3


@numba.njit(cache=True)
def normal_at(seed, counter):
    """Standard normal variate for block ``counter`` under key ``seed``."""
    s = np.uint64(seed)
    c = np.uint64(counter)
    w0, w1, w2, w3 = philox4x32(c & _MASK32, c >> _SHIFT32, 0, 0, s & _MASK32, s >> _SHIFT32)
    u1 = float((w0 >> np.uint64(5)) * np.uint64(67108864) + (w1 >> np.uint64(6))) * _INV_2_53
    u2 = float((w2 >> np.uint64(5)) * np.uint64(67108864) + (w3 >> np.uint64(6))) * _INV_2_53
    # 1 - u1 lies in (0, 1], so the log is finite.
    return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(_TWO_PI * u2)


@numba.njit(cache=True)
def fill_normals(seed, start, out):
    for i in range(out.shape[0]):
        out[i] = normal_at(seed, np.uint64(start) + np.uint64(i))


@numba.njit(cache=True)
def _child_seed(seed, index):
    s = np.uint64(seed)
    j = np.uint64(index)
    # Counter words 2 and 3 are never both set by normal_at, so this key
    # derivation cannot collide with a draw.
    w0, w1, _, _ = philox4x32(j & _MASK32, j >> _SHIFT32, _MASK32, _MASK32, s & _MASK32, s >> _SHIFT32)
    return w0 | (w1 << _SHIFT32)


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < SEED_LIMIT:
        raise ValueError(f"seed must be in [0, 2**64), got {seed}")
    return seed


@dataclass(frozen=True)
class NoiseStream:
    """Immutable position in a counter-based Gaussian sequence."""

    seed: int
    counter: int = 0

    def __post_init__(self):
        _check_seed(self.seed)
        if not 0 <= int(self.counter) < SEED_LIMIT:
            raise ValueError(f"counter must be in [0, 2**64), got {self.counter}")

    def advance(self, n: int = 1) -> NoiseStream:
        return NoiseStream(self.seed, self.counter + n)

    def split(self, index: int) -> NoiseStream:
        """Independent child stream, e.g. one per Monte-Carlo path."""
        return NoiseStream(int(_child_seed(np.uint64(self.seed), np.uint64(index))), 0)


def gaussian(stream: NoiseStream) -> tuple[float, NoiseStream]:
    return float(normal_at(np.uint64(stream.seed), np.uint64(stream.counter))), stream.advance()


def gaussians(stream: NoiseStream, n: int) -> tuple[np.ndarray, NoiseStream]:
    """``n`` consecutive variates starting at ``stream.counter``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if stream.counter + n > SEED_LIMIT:
        raise ValueError("counter space exhausted")
    out = np.empty(n)
    if n:
        fill_normals(np.uint64(stream.seed), np.uint64(stream.counter), out)
    return out, stream.advance(n)
