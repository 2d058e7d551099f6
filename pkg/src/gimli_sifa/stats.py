"""Distinguishers over observed intermediate-value distributions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class DistributionCounts:
    bins: tuple

    def __post_init__(self):
        object.__setattr__(self, "bins", tuple(int(b) for b in self.bins))
        if not self.bins or any(b < 0 for b in self.bins):
            raise ValueError("counts must be non-negative over a non-empty value space")

    @property
    def total(self) -> int:
        return sum(self.bins)

    @property
    def size(self) -> int:
        return len(self.bins)

    def frequencies(self) -> np.ndarray:
        return np.array(self.bins, dtype=float) / self.total

    @classmethod
    def from_values(cls, values: Sequence[int], size: int = 2) -> "DistributionCounts":
        return cls(tuple(np.bincount(np.asarray(values, dtype=np.int64), minlength=size)))


def chi_squared(observed: DistributionCounts, expected: Sequence[float]) -> float:
    """Pearson statistic ``N * sum((a - b)^2 / b)`` with ``a`` the observed
    frequencies and ``b`` the expected distribution."""
    b = np.asarray(expected, dtype=float)
    if b.shape != (observed.size,):
        raise ValueError("expected distribution does not match the value space")
    if np.any(b <= 0):
        raise ValueError("expected probabilities must be strictly positive")
    if observed.total == 0:
        raise ValueError("no observations")
    a = observed.frequencies()
    return float(observed.total * np.sum((a - b) ** 2 / b))


def sei(observed: DistributionCounts) -> float:
    """Squared Euclidean imbalance: distance of the frequencies from uniform."""
    if observed.total < 1:
        raise ValueError("no observations")
    a = observed.frequencies()
    return float(np.sum((a - 1.0 / observed.size) ** 2))


def sei_from_ones(ones, n):
    """Vectorised single-bit SEI from counts of ones among ``n`` samples."""
    d = 2.0 * np.asarray(ones, dtype=float) - n
    return d * d / (2.0 * n * n)
