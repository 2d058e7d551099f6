"""Fault models, fault distribution tables and ineffectiveness analytics.

All six models act independently on every bit of the faulted window, so an
exact table is the Kronecker power of a 2x2 per-bit kernel.  Kernels are kept
as :class:`fractions.Fraction` so small tables compare exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Optional

import numpy as np

MODEL_NAMES = ("stuck-at-0", "random-and", "random-or", "bitflip", "random-fault", "prob-bitflip")
MAX_EXACT_WIDTH = 16
MAX_DENSE_WIDTH = 12


class NoIneffectiveFaults(ValueError):
    """The fault model never leaves the value unchanged."""


def _prob(x) -> Fraction:
    p = Fraction(x) if not isinstance(x, str) else Fraction(x.strip())
    if not 0 <= p <= 1:
        raise ValueError(f"probability out of range: {x}")
    return p


@dataclass(frozen=True)
class FaultModel:
    name: str
    p_one_to_zero: Fraction = Fraction(0)
    p_zero_to_one: Fraction = Fraction(0)

    def __post_init__(self):
        if self.name not in MODEL_NAMES:
            raise ValueError(f"unknown fault model {self.name!r}; choose from {', '.join(MODEL_NAMES)}")
        object.__setattr__(self, "p_one_to_zero", _prob(self.p_one_to_zero))
        object.__setattr__(self, "p_zero_to_one", _prob(self.p_zero_to_one))

    @classmethod
    def parse(cls, text: str) -> "FaultModel":
        """``name`` or ``prob-bitflip:p10,p01`` (fractions or decimals)."""
        name, _, args = text.partition(":")
        if name == "prob-bitflip":
            if not args:
                return cls(name, Fraction(2, 3), Fraction(1, 3))
            p10, p01 = args.split(",")
            return cls(name, _prob(p10), _prob(p01))
        if args:
            raise ValueError(f"model {name!r} takes no parameters")
        return cls(name)

    def __str__(self):
        if self.name == "prob-bitflip":
            return f"{self.name}:{self.p_one_to_zero},{self.p_zero_to_one}"
        return self.name

    def kernel(self) -> tuple:
        """Per-bit transition matrix ``((p00, p01), (p10, p11))``."""
        h, z, o = Fraction(1, 2), Fraction(0), Fraction(1)
        if self.name == "stuck-at-0":
            return ((o, z), (o, z))
        if self.name == "random-and":
            return ((o, z), (h, h))
        if self.name == "random-or":
            return ((h, h), (z, o))
        if self.name == "bitflip":
            return ((z, o), (o, z))
        if self.name == "random-fault":
            return ((h, h), (h, h))
        p10, p01 = self.p_one_to_zero, self.p_zero_to_one
        return ((1 - p01, p01), (p10, 1 - p10))

    def bias_direction(self) -> Optional[int]:
        """Bit value favoured among ineffective faults, if any."""
        k = self.kernel()
        if k[0][0] > k[1][1]:
            return 0
        if k[1][1] > k[0][0]:
            return 1
        return None


def apply_fault(value: int, model: FaultModel, width: int, rng: np.random.Generator) -> int:
    """Faulted value of one ``width``-bit word."""
    if not 0 <= value < 1 << width:
        raise ValueError("value does not fit the fault width")
    out = apply_fault_batch(np.array([value], dtype=np.uint64), model, width, rng)
    return int(out[0])


def apply_fault_batch(values: np.ndarray, model: FaultModel, width: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Vectorised :func:`apply_fault` over a uint64 array of window values."""
    values = np.asarray(values, dtype=np.uint64)
    full = np.uint64((1 << width) - 1)
    n = len(values)
    if model.name == "stuck-at-0":
        return np.zeros_like(values)
    if model.name == "bitflip":
        return values ^ full
    if model.name in ("random-and", "random-or", "random-fault"):
        mask = rng.integers(0, 1 << width, size=n, dtype=np.uint64, endpoint=False)
        if model.name == "random-and":
            return values & mask
        if model.name == "random-or":
            return values | mask
        return mask
    u = rng.random((n, width))
    shifts = np.arange(width, dtype=np.uint64)
    bits = (values[:, None] >> shifts) & np.uint64(1)
    p = np.where(bits == 1, float(model.p_one_to_zero), float(model.p_zero_to_one))
    flips = (u < p).astype(np.uint64)
    return values ^ (flips << shifts).sum(axis=1, dtype=np.uint64)


class Fdt:
    """Fault distribution table ``p[s][s']`` for a ``width``-bit value.

    Built either from a per-bit kernel (exact, product form) or from an
    explicit matrix (e.g. a Monte-Carlo estimate).
    """

    def __init__(self, width: int, kernel: Optional[tuple] = None, matrix: Optional[np.ndarray] = None):
        if (kernel is None) == (matrix is None):
            raise ValueError("give exactly one of kernel or matrix")
        self.width = width
        self.kernel = kernel
        self._matrix = None if matrix is None else np.asarray(matrix, dtype=float)

    @property
    def size(self) -> int:
        return 1 << self.width

    def exact(self) -> list:
        """Table as nested lists of Fractions (product-form tables only)."""
        if self.kernel is None:
            raise ValueError("estimated tables have no exact form")
        if self.width > MAX_DENSE_WIDTH:
            raise ValueError("table too large to materialise")
        rows = []
        for s in range(self.size):
            row = []
            for t in range(self.size):
                p = Fraction(1)
                for i in range(self.width):
                    p *= self.kernel[(s >> i) & 1][(t >> i) & 1]
                row.append(p)
            rows.append(row)
        return rows

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            if self.width > MAX_DENSE_WIDTH:
                raise ValueError(f"dense table for w={self.width} is too large")
            k = np.array([[float(x) for x in r] for r in self.kernel])
            # bit i of s is the i-th least significant index digit
            self._matrix = reduce(np.kron, [k] * self.width) if self.width else np.ones((1, 1))
        return self._matrix

    def diagonal(self) -> np.ndarray:
        if self.kernel is not None:
            d = np.array([float(self.kernel[0][0]), float(self.kernel[1][1])])
            s = np.arange(self.size)
            out = np.ones(self.size)
            for i in range(self.width):
                out *= d[(s >> i) & 1]
            return out
        return np.diag(self._matrix).copy()


def build_fdt(model: FaultModel, width: int) -> Fdt:
    if not 1 <= width <= MAX_EXACT_WIDTH:
        raise ValueError(f"exact tables need 1 <= w <= {MAX_EXACT_WIDTH}; use estimate_fdt "
                         "or analytic_rate for wider faults")
    return Fdt(width, kernel=model.kernel())


def estimate_fdt(model: FaultModel, width: int, samples: int, rng: np.random.Generator) -> Fdt:
    """Empirical table from ``samples`` fault draws per input value."""
    if samples < 1:
        raise ValueError("samples must be positive")
    if width > MAX_DENSE_WIDTH:
        raise ValueError(f"estimated tables need w <= {MAX_DENSE_WIDTH}")
    size = 1 << width
    m = np.zeros((size, size))
    for s in range(size):
        out = apply_fault_batch(np.full(samples, s, dtype=np.uint64), model, width, rng)
        m[s] = np.bincount(out.astype(np.int64), minlength=size) / samples
    return Fdt(width, matrix=m)


def ineffectiveness_rate(fdt: Fdt) -> float:
    """Probability that the fault leaves a uniformly distributed value unchanged."""
    if fdt.kernel is not None:
        return float(_kernel_rate(fdt.kernel) ** fdt.width)
    return float(fdt.diagonal().sum() / fdt.size)


def _kernel_rate(kernel) -> Fraction:
    return (kernel[0][0] + kernel[1][1]) / 2


def analytic_rate(model: FaultModel, width: int) -> Fraction:
    """Exact product-form rate; valid for every width up to 32."""
    return _kernel_rate(model.kernel()) ** width


def diagonal_distribution(fdt: Fdt) -> np.ndarray:
    """Distribution of the value given that the fault was ineffective."""
    r = ineffectiveness_rate(fdt)
    if r == 0:
        raise NoIneffectiveFaults("no ineffective faults possible under this model")
    return fdt.diagonal() / (fdt.size * r)
