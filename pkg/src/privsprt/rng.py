"""Counter-based, path-addressed random streams.

Every draw is a pure function of ``(master_seed, path, draw_index)``: the
path is folded into a 64-bit Philox key with SplitMix64 and the draw index is
the Philox counter. Streams on different paths are independent, and a stream
can be re-created anywhere (another thread, the compiled kernel) and will
reproduce the same draws bit for bit.

Each draw consumes exactly one Philox4x32-10 block, i.e. two 53-bit uniforms.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

MASK32 = 0xFFFFFFFF
MASK64 = 0xFFFFFFFFFFFFFFFF

_PHILOX_M0 = 0xD2511F53
_PHILOX_M1 = 0xCD9E8D57
_PHILOX_W0 = 0x9E3779B9
_PHILOX_W1 = 0xBB67AE85
_ROUNDS = 10

_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / 9007199254740992.0

# Role indices for the per-trial substreams used by the test runners.
ROLE_OBS = 0
ROLE_THRESHOLD = 1
ROLE_QUERY = 2


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_key(master_seed: int, path: Sequence[int]) -> int:
    """Fold a master seed and an integer path into a 64-bit stream key."""
    k = splitmix64(master_seed & MASK64)
    for p in path:
        if p < 0:
            raise ValueError(f"stream path elements must be non-negative, got {p}")
        k = splitmix64(k ^ (p & MASK64))
    return k


def philox4x32(counter: Sequence[int], key: Sequence[int]) -> tuple[int, int, int, int]:
    """Philox4x32-10 block function on plain Python integers."""
    c0, c1, c2, c3 = counter
    k0, k1 = key
    for i in range(_ROUNDS):
        if i:
            k0 = (k0 + _PHILOX_W0) & MASK32
            k1 = (k1 + _PHILOX_W1) & MASK32
        p0 = _PHILOX_M0 * c0
        p1 = _PHILOX_M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> 32) ^ c1 ^ k0,
            p1 & MASK32,
            (p0 >> 32) ^ c3 ^ k1,
            p0 & MASK32,
        )
    return c0, c1, c2, c3


def philox4x32_array(counter_lo: np.ndarray, counter_hi: np.ndarray, key: int) -> tuple[np.ndarray, ...]:
    """Vectorised Philox4x32-10 over counters ``(lo, hi, 0, 0)`` with a fixed key."""
    c0 = np.asarray(counter_lo, dtype=np.uint64) & np.uint64(MASK32)
    c1 = np.asarray(counter_hi, dtype=np.uint64) & np.uint64(MASK32)
    c2 = np.zeros_like(c0)
    c3 = np.zeros_like(c0)
    k0 = key & MASK32
    k1 = (key >> 32) & MASK32
    m0 = np.uint64(_PHILOX_M0)
    m1 = np.uint64(_PHILOX_M1)
    lo = np.uint64(MASK32)
    s32 = np.uint64(32)
    for i in range(_ROUNDS):
        if i:
            k0 = (k0 + _PHILOX_W0) & MASK32
            k1 = (k1 + _PHILOX_W1) & MASK32
        p0 = m0 * c0
        p1 = m1 * c2
        c0, c1, c2, c3 = (
            (p1 >> s32) ^ c1 ^ np.uint64(k0),
            p1 & lo,
            (p0 >> s32) ^ c3 ^ np.uint64(k1),
            p0 & lo,
        )
    return c0, c1, c2, c3


def _to_unit(x64: int) -> float:
    return ((x64 >> 11) + 0.5) * _INV_2_53


class RngStream:
    """A reproducible random stream addressed by ``(master_seed, path)``.

    ``counter`` is the index of the next draw. Substreams are obtained with
    :meth:`child`; children are cached so their draw counters can be audited
    after a run.
    """

    __slots__ = ("master_seed", "path", "counter", "_k0", "_k1", "_children")

    def __init__(self, master_seed: int, path: Sequence[int] = ()):
        self.master_seed = int(master_seed)
        self.path = tuple(int(p) for p in path)
        key = derive_key(self.master_seed, self.path)
        self._k0 = key & MASK32
        self._k1 = key >> 32
        self.counter = 0
        self._children: dict[int, RngStream] = {}

    @property
    def key(self) -> int:
        return (self._k1 << 32) | self._k0

    def __repr__(self) -> str:
        return f"RngStream(seed={self.master_seed}, path={self.path}, counter={self.counter})"

    def child(self, index: int) -> RngStream:
        stream = self._children.get(index)
        if stream is None:
            stream = RngStream(self.master_seed, self.path + (int(index),))
            self._children[index] = stream
        return stream

    def _uniform_pair(self) -> tuple[float, float]:
        i = self.counter
        self.counter = i + 1
        w0, w1, w2, w3 = philox4x32((i & MASK32, i >> 32, 0, 0), (self._k0, self._k1))
        return _to_unit((w1 << 32) | w0), _to_unit((w3 << 32) | w2)

    def uniform(self) -> float:
        """Uniform draw on the open interval (0, 1)."""
        return self._uniform_pair()[0]

    def normal(self) -> float:
        """Standard normal draw (Box-Muller, one block per draw)."""
        u1, u2 = self._uniform_pair()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)

    def laplace(self, scale: float = 1.0) -> float:
        """Laplace(0, scale) draw by inverse CDF."""
        u = self._uniform_pair()[0]
        if u < 0.5:
            return scale * math.log(2.0 * u)
        return -scale * math.log(2.0 * (1.0 - u))

    def bernoulli(self, p: float) -> int:
        return 1 if self.uniform() < p else 0

    def _uniform_blocks(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        idx = np.arange(self.counter, self.counter + n, dtype=np.uint64)
        self.counter += n
        w0, w1, w2, w3 = philox4x32_array(idx & np.uint64(MASK32), idx >> np.uint64(32), self.key)
        s32 = np.uint64(32)
        s11 = np.uint64(11)
        x1 = (w1 << s32) | w0
        x2 = (w3 << s32) | w2
        u1 = ((x1 >> s11).astype(np.float64) + 0.5) * _INV_2_53
        u2 = ((x2 >> s11).astype(np.float64) + 0.5) * _INV_2_53
        return u1, u2

    def uniforms(self, n: int) -> np.ndarray:
        """``n`` consecutive uniform draws as an array (same values as repeated :meth:`uniform`)."""
        return self._uniform_blocks(n)[0]

    def normals(self, n: int) -> np.ndarray:
        """``n`` consecutive normal draws; equal to repeated :meth:`normal` up to libm rounding."""
        u1, u2 = self._uniform_blocks(n)
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)

    def laplaces(self, n: int, scale: float = 1.0) -> np.ndarray:
        u = self._uniform_blocks(n)[0]
        return np.where(u < 0.5, scale * np.log(2.0 * u), -scale * np.log(2.0 * (1.0 - u)))
