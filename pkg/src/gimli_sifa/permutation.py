"""Gimli permutation on a 3x4 matrix of 32-bit words.

The state is stored row-major as 12 words: a0..a3, b0..b3, c0..c3.  Rounds
are numbered 24 down to 1.  Hooks observe or mutate the state at every round
boundary; boundary ``r`` means round ``r`` has just completed and boundary
``INITIAL_BOUNDARY`` (25) is the freshly initialised state.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

MASK32 = 0xFFFFFFFF
ROUND_CONSTANT = 0x9E377900
INITIAL_BOUNDARY = 25
ROWS = "abc"

# Shift of the (y & z) term in the c-row update.  The designers' code uses 2;
# "shift3" uses 3, for comparison.
SPBOX_SHIFTS = {"official": 2, "shift3": 3}


def spbox_shift(variant: str) -> int:
    try:
        return SPBOX_SHIFTS[variant]
    except KeyError:
        raise ValueError(f"unknown SP-box variant {variant!r} (expected official|shift3)") from None


def rotl(x: int, n: int) -> int:
    n %= 32
    if n == 0:
        return x
    return ((x << n) | (x >> (32 - n))) & MASK32


def round_constant(r: int) -> int:
    return ROUND_CONSTANT ^ r


@dataclass
class GimliState:
    """Mutable 384-bit Gimli state."""

    words: list

    def __post_init__(self):
        if len(self.words) != 12:
            raise ValueError("a Gimli state has exactly 12 words")
        self.words = [int(w) & MASK32 for w in self.words]

    @classmethod
    def zero(cls) -> "GimliState":
        return cls([0] * 12)

    @classmethod
    def from_rows(cls, a, b, c) -> "GimliState":
        return cls(list(a) + list(b) + list(c))

    @classmethod
    def from_bytes(cls, data: bytes) -> "GimliState":
        if len(data) != 48:
            raise ValueError("state serialization is 48 bytes")
        return cls(list(struct.unpack("<12I", data)))

    def to_bytes(self) -> bytes:
        return struct.pack("<12I", *self.words)

    @property
    def a(self):
        return tuple(self.words[0:4])

    @property
    def b(self):
        return tuple(self.words[4:8])

    @property
    def c(self):
        return tuple(self.words[8:12])

    def word(self, row: str, col: int) -> int:
        return self.words[4 * ROWS.index(row) + col]

    def set_word(self, row: str, col: int, value: int) -> None:
        self.words[4 * ROWS.index(row) + col] = value & MASK32

    def bit(self, row: str, col: int, bit: int) -> int:
        return (self.word(row, col) >> bit) & 1

    def copy(self) -> "GimliState":
        return GimliState(list(self.words))


def sp_box(a: int, b: int, c: int, variant: str = "official") -> tuple:
    """Non-linear column map; returns the new (a, b, c) words of one column."""
    sh = spbox_shift(variant)
    x = rotl(a, 24)
    y = rotl(b, 9)
    z = c
    new_c = (x ^ (z << 1) ^ ((y & z) << sh)) & MASK32
    new_b = (y ^ x ^ ((x | z) << 1)) & MASK32
    new_a = (z ^ y ^ ((x & y) << 3)) & MASK32
    return new_a, new_b, new_c


def linear_layer(state: GimliState, r: int) -> GimliState:
    """Swaps and constant addition of round ``r``; returns a new state."""
    if not 1 <= r <= 24:
        raise ValueError(f"round index must be in 1..24, got {r}")
    w = list(state.words)
    if r % 4 == 0:
        w[0], w[1], w[2], w[3] = w[1], w[0], w[3], w[2]
        w[0] ^= round_constant(r)
    elif r % 4 == 2:
        w[0], w[1], w[2], w[3] = w[2], w[3], w[0], w[1]
    return GimliState(w)


def _round(w: list, r: int, sh: int) -> None:
    for j in range(4):
        x = ((w[j] << 24) | (w[j] >> 8)) & MASK32
        y = ((w[4 + j] << 9) | (w[4 + j] >> 23)) & MASK32
        z = w[8 + j]
        w[8 + j] = (x ^ (z << 1) ^ ((y & z) << sh)) & MASK32
        w[4 + j] = (y ^ x ^ ((x | z) << 1)) & MASK32
        w[j] = (z ^ y ^ ((x & y) << 3)) & MASK32
    if r & 3 == 0:
        w[0], w[1], w[2], w[3] = w[1], w[0], w[3], w[2]
        w[0] ^= ROUND_CONSTANT ^ r
    elif r & 3 == 2:
        w[0], w[1], w[2], w[3] = w[2], w[3], w[0], w[1]


def permute(state: GimliState, variant: str = "official") -> GimliState:
    sh = spbox_shift(variant)
    w = list(state.words)
    for r in range(24, 0, -1):
        _round(w, r, sh)
    return GimliState(w)


Hook = Callable[[int, GimliState], None]


def permute_hooked(state: GimliState, hook: Optional[Hook], variant: str = "official",
                   stop_after: int = 1) -> GimliState:
    """Permute with ``hook(boundary, state)`` called at every round boundary.

    The hook receives a live state it may mutate.  ``stop_after`` ends the
    computation once that round completes (and its hook ran); the default
    runs all 24 rounds.
    """
    sh = spbox_shift(variant)
    s = state.copy()
    if hook is not None:
        hook(INITIAL_BOUNDARY, s)
    for r in range(24, stop_after - 1, -1):
        _round(s.words, r, sh)
        if hook is not None:
            hook(r, s)
    return s


# -- batched variant ---------------------------------------------------------

BatchHook = Callable[[int, np.ndarray], None]


def _rotl_np(x: np.ndarray, n: int) -> np.ndarray:
    return (x << np.uint32(n)) | (x >> np.uint32(32 - n))


def permute_batch(states: np.ndarray, hook: Optional[BatchHook] = None,
                  variant: str = "official", stop_after: int = 1) -> np.ndarray:
    """Permute an ``(n, 12)`` uint32 array of states; same hook contract as
    :func:`permute_hooked` but the hook sees the whole batch."""
    sh = np.uint32(spbox_shift(variant))
    one, three = np.uint32(1), np.uint32(3)
    s = np.array(states, dtype=np.uint32, copy=True)
    if s.ndim != 2 or s.shape[1] != 12:
        raise ValueError("states must have shape (n, 12)")
    if hook is not None:
        hook(INITIAL_BOUNDARY, s)
    for r in range(24, stop_after - 1, -1):
        x = _rotl_np(s[:, 0:4], 24)
        y = _rotl_np(s[:, 4:8], 9)
        z = s[:, 8:12].copy()
        s[:, 8:12] = x ^ (z << one) ^ ((y & z) << sh)
        s[:, 4:8] = y ^ x ^ ((x | z) << one)
        s[:, 0:4] = z ^ y ^ ((x & y) << three)
        if r % 4 == 0:
            s[:, 0:4] = s[:, [1, 0, 3, 2]]
            s[:, 0] ^= np.uint32(ROUND_CONSTANT ^ r)
        elif r % 4 == 2:
            s[:, 0:4] = s[:, [2, 3, 0, 1]]
        if hook is not None:
            hook(r, s)
    return s
