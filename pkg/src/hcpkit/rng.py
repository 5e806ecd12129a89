"""Counter-based random numbers (Philox4x32-10).

Every draw is addressed by ``(seed, stream, tag, index)`` instead of being
pulled from a sequential state.  Two runs that address the same counters see
the same numbers regardless of array layout, truncation or worker count,
which is what lets a truncated half-line run reproduce the clean part of a
larger one exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)

# purpose tags (high byte of counter word 2)
TAG_GAP = 1
TAG_GAP_LEFT = 2
TAG_STRADDLE = 3
TAG_RESAMPLE = 4
TAG_CLOCK = 16


@numba.njit(cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten rounds of Philox4x32 on one counter block; returns four uint32 words."""
    c0 = np.uint64(c0) & _MASK
    c1 = np.uint64(c1) & _MASK
    c2 = np.uint64(c2) & _MASK
    c3 = np.uint64(c3) & _MASK
    k0 = np.uint64(k0) & _MASK
    k1 = np.uint64(k1) & _MASK
    for r in range(10):
        if r > 0:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _S32
        lo0 = p0 & _MASK
        hi1 = p1 >> _S32
        lo1 = p1 & _MASK
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@numba.njit(cache=True)
def _to_unit(a, b):
    # 53-bit uniform in [0, 1)
    return ((a >> np.uint64(5)) * 67108864.0 + (b >> np.uint64(6))) / 9007199254740992.0


@numba.njit(cache=True)
def uniform_pair(k0, k1, stream, tag, index):
    """Two independent U[0,1) numbers for the counter (index, tag, stream)."""
    idx = np.uint64(index)
    w0, w1, w2, w3 = philox4x32(idx & _MASK, idx >> _S32, tag, stream, k0, k1)
    return _to_unit(w0, w1), _to_unit(w2, w3)


@numba.njit(cache=True)
def _uniform_block(k0, k1, stream, tag, indices, out0, out1):
    for i in range(indices.shape[0]):
        u, v = uniform_pair(k0, k1, stream, tag, indices[i])
        out0[i] = u
        out1[i] = v


def split_seed(seed: int) -> tuple[int, int]:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must lie in [0, 2**64), got {seed}")
    return seed & 0xFFFFFFFF, seed >> 32


@dataclass(frozen=True)
class CounterRNG:
    """A (seed, stream) pair; replicas use distinct streams."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        split_seed(self.seed)
        if not 0 <= int(self.stream) < 2**32:
            raise ValueError("stream index must fit in 32 bits")

    @property
    def key(self) -> tuple[int, int]:
        return split_seed(self.seed)

    def uniforms(self, tag: int, indices) -> tuple[np.ndarray, np.ndarray]:
        """Pairs of uniforms addressed by ``indices`` under a purpose tag."""
        idx = np.ascontiguousarray(indices, dtype=np.int64)
        if idx.size and idx.min() < 0:
            raise ValueError("counter indices must be non-negative")
        u = np.empty(idx.shape[0])
        v = np.empty(idx.shape[0])
        k0, k1 = self.key
        _uniform_block(k0, k1, int(self.stream), int(tag), idx, u, v)
        return u, v

    def spawn(self, stream: int) -> "CounterRNG":
        return CounterRNG(self.seed, stream)


def clock_tag(epoch: int) -> int:
    if not 0 <= epoch < 2**24:
        raise ValueError("epoch index out of range")
    return (TAG_CLOCK << 24) | epoch
