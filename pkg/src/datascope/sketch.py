"""Counting unique state-action pairs: exact and HyperLogLog.

Keys are the 12-byte big-endian serialization of ``(state: u64, action: u32)``.
The HyperLogLog sketch keeps ``m = 2**p`` one-byte registers; the top ``p``
bits of a 64-bit hash pick the register and the rank of the remaining bits
updates it. Merging is a register-wise maximum, so shards can be counted
independently and combined.
"""

from __future__ import annotations

import struct

import numpy as np

from ._validation import check_dataset

DEFAULT_PRECISION = 14
DEFAULT_SEED = 0x5EED_CAFE_F00D_D00D
_MAGIC = b"HLL1"

_U64 = np.uint64
_M1 = _U64(0xFF51AFD7ED558CCD)
_M2 = _U64(0xC4CEB9FE1A85EC53)
_K_ACTION = _U64(0x9E3779B97F4A7C15)


def sa_key(state, action) -> bytes:
    """Canonical byte key of a state-action pair."""
    return struct.pack(">QI", int(state), int(action))


def parse_key(key: bytes):
    return struct.unpack(">QI", key)


def _fmix64(h):
    h = h ^ (h >> _U64(33))
    h = h * _M1
    h = h ^ (h >> _U64(33))
    h = h * _M2
    return h ^ (h >> _U64(33))


def hash_pairs(states, actions, seed=DEFAULT_SEED) -> np.ndarray:
    """64-bit hashes of state-action pairs (vectorized murmur3 finalizer mix)."""
    s = np.asarray(states, dtype=np.uint64)
    a = np.asarray(actions, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = _fmix64(np.asarray(seed, dtype=np.uint64) ^ _fmix64(s + _K_ACTION))
        return _fmix64(h ^ ((a + _U64(1)) * _K_ACTION))


def hash_key(key: bytes, seed=DEFAULT_SEED) -> int:
    s, a = parse_key(key)
    return int(hash_pairs(np.array([s]), np.array([a]), seed)[0])


def _bit_length(x):
    x = x.copy()
    n = np.zeros(x.shape, dtype=np.int64)
    for shift in (32, 16, 8, 4, 2, 1):
        big = x >= (_U64(1) << _U64(shift))
        n[big] += shift
        x[big] >>= _U64(shift)
    return n + (x > 0)


def _alpha(m):
    if m == 16:
        return 0.673
    if m == 32:
        return 0.697
    if m == 64:
        return 0.709
    return 0.7213 / (1.0 + 1.079 / m)


class CardinalitySketch:
    """Dense HyperLogLog sketch.

    Parameters
    ----------
    p : int
        Precision; the sketch has ``2**p`` registers. Standard error is about
        ``1.04 / sqrt(2**p)``.
    seed : int
        Hash seed. Only sketches with equal ``p`` and ``seed`` can be merged.
    """

    def __init__(self, p=DEFAULT_PRECISION, seed=DEFAULT_SEED, registers=None):
        if not 4 <= p <= 18:
            raise ValueError(f"precision p={p} must lie in [4, 18]")
        self.p = int(p)
        self.seed = int(seed) & 0xFFFF_FFFF_FFFF_FFFF
        self.m = 1 << self.p
        if registers is None:
            registers = np.zeros(self.m, dtype=np.uint8)
        else:
            registers = np.array(registers, dtype=np.uint8)
            if registers.shape != (self.m,):
                raise ValueError(f"expected {self.m} registers")
            if registers.max(initial=0) > 64 - self.p + 1:
                raise ValueError("register value out of range")
        self.registers = registers

    def update_hashes(self, hashes):
        h = np.asarray(hashes, dtype=np.uint64)
        if h.size == 0:
            return self
        tail_bits = 64 - self.p
        idx = (h >> _U64(tail_bits)).astype(np.intp)
        tail = h & _U64((1 << tail_bits) - 1)
        rank = (tail_bits - _bit_length(tail) + 1).astype(np.uint8)
        np.maximum.at(self.registers, idx, rank)
        return self

    def update(self, states, actions):
        """Insert arrays of state and action ids."""
        return self.update_hashes(hash_pairs(states, actions, self.seed))

    def insert(self, key: bytes):
        return self.update_hashes(np.array([hash_key(key, self.seed)], dtype=np.uint64))

    def estimate(self) -> float:
        reg = self.registers
        inv = np.ldexp(1.0, -reg.astype(np.int64)).sum()
        raw = _alpha(self.m) * self.m * self.m / inv
        zeros = int(np.count_nonzero(reg == 0))
        if raw <= 2.5 * self.m and zeros:
            return self.m * float(np.log(self.m / zeros))
        return float(raw)

    def _check_compatible(self, other):
        if not isinstance(other, CardinalitySketch):
            raise TypeError("can only merge CardinalitySketch instances")
        if (self.p, self.seed) != (other.p, other.seed):
            raise ValueError("sketches differ in precision or hash seed")

    def merge(self, other) -> "CardinalitySketch":
        self._check_compatible(other)
        return CardinalitySketch(self.p, self.seed, np.maximum(self.registers, other.registers))

    def copy(self):
        return CardinalitySketch(self.p, self.seed, self.registers)

    def to_bytes(self) -> bytes:
        return _MAGIC + struct.pack(">BQ", self.p, self.seed) + self.registers.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes):
        if blob[:4] != _MAGIC:
            raise ValueError("not a serialized sketch (bad magic)")
        p, seed = struct.unpack(">BQ", blob[4:13])
        regs = np.frombuffer(blob[13:], dtype=np.uint8)
        if regs.size != 1 << p:
            raise ValueError("truncated sketch")
        return cls(p, seed, regs)

    def __eq__(self, other):
        if not isinstance(other, CardinalitySketch):
            return NotImplemented
        return (self.p, self.seed) == (other.p, other.seed) and np.array_equal(
            self.registers, other.registers
        )

    __hash__ = None

    def __len__(self):
        return int(round(self.estimate()))

    def __repr__(self):
        return f"CardinalitySketch(p={self.p}, estimate={self.estimate():.1f})"


def hll_insert(sk: CardinalitySketch, key: bytes) -> CardinalitySketch:
    return sk.insert(key)


def hll_estimate(sk: CardinalitySketch) -> float:
    return sk.estimate()


def hll_merge(a: CardinalitySketch, b: CardinalitySketch) -> CardinalitySketch:
    return a.merge(b)


def _pair_codes(states, actions):
    s = np.asarray(states, dtype=np.uint64)
    a = np.asarray(actions, dtype=np.uint64)
    return (s << _U64(32)) | a


def exact_unique_count(ds) -> int:
    """Exact number of distinct (s, a) pairs in a dataset (hash-set counting)."""
    check_dataset(ds, allow_empty=True)
    if len(ds) == 0:
        return 0
    return int(np.unique(_pair_codes(ds.s, ds.a)).size)


def hll_count(ds, p=DEFAULT_PRECISION, seed=DEFAULT_SEED, shards=1) -> float:
    """HyperLogLog estimate of the distinct (s, a) pairs of ``ds``.

    With ``shards > 1`` the rows are split into contiguous chunks, sketched
    separately and merged; the result is register-identical to one pass.
    """
    check_dataset(ds, allow_empty=True)
    sketch = CardinalitySketch(p, seed)
    for chunk in np.array_split(np.arange(len(ds)), max(1, shards)):
        sketch = sketch.merge(CardinalitySketch(p, seed).update(ds.s[chunk], ds.a[chunk]))
    return sketch.estimate()
