"""Counter-based SplitMix64 streams for reproducible parallel sampling.

Replicate ``r`` of a run seeded with ``seed`` owns the stream whose starting
state is ``mix64(seed ^ mix64((r + 1) * GOLDEN))``; draws within a stream
advance a Weyl counter by the golden-ratio increment and pass it through the
SplitMix64 finaliser.  Streams therefore depend only on ``(seed, r)`` and the
order in which the replicate consumes numbers -- never on which thread runs
it.

All helpers are numba-compiled and operate on a one-element ``uint64`` state
array so the state can be threaded through other compiled kernels.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

__all__ = [
    "MASK64",
    "seed_to_uint64",
    "stream_state",
    "next_u64",
    "uniform",
    "binomial",
    "poisson",
]

MASK64 = (1 << 64) - 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO_M53 = 1.0 / 9007199254740992.0
_POISSON_CHUNK = 200.0


def seed_to_uint64(seed: int) -> np.uint64:
    """Reduce any Python integer to an unsigned 64-bit seed."""
    return np.uint64(int(seed) & MASK64)


@njit(cache=True, nogil=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def stream_state(seed, r):
    """Fresh one-element state for replicate ``r`` of run ``seed``."""
    st = np.empty(1, dtype=np.uint64)
    key = _mix64((np.uint64(r) + _ONE) * _GOLDEN)
    st[0] = _mix64(np.uint64(seed) ^ key)
    return st


@njit(cache=True, nogil=True, inline="always")
def next_u64(st):
    st[0] += _GOLDEN
    return _mix64(st[0])


@njit(cache=True, nogil=True, inline="always")
def uniform(st):
    """Uniform double in ``[0, 1)`` with 53 random bits."""
    return float(next_u64(st) >> _S11) * _TWO_M53


@njit(cache=True, nogil=True)
def binomial(n, p, st):
    """Exact Binomial(n, p) draw by geometric skipping.

    Successes are located by jumping over Geometric(q) runs of failures with
    ``q = min(p, 1-p)``; the cost is ``O(n q + 1)`` and nothing underflows.
    """
    if p <= 0.0 or n <= 0:
        return 0
    if p >= 1.0:
        return n
    flip = p > 0.5
    q = 1.0 - p if flip else p
    lq = math.log1p(-q)
    x = 0
    pos = 0
    while True:
        u = uniform(st)
        skip = math.floor(math.log1p(-u) / lq)
        if skip >= n - pos:
            break
        pos += int(skip) + 1
        x += 1
    return n - x if flip else x


@njit(cache=True, nogil=True)
def poisson(lam, st):
    """Exact Poisson(lam) draw (multiplication method in chunks of 200)."""
    total = 0
    rest = lam
    while rest > 0.0:
        piece = rest if rest < _POISSON_CHUNK else _POISSON_CHUNK
        rest -= piece
        limit = math.exp(-piece)
        prod = uniform(st)
        while prod > limit:
            total += 1
            prod *= uniform(st)
    return total
