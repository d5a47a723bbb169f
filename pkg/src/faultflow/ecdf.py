"""Empirical CDFs with linear interpolation between order statistics.

Order statistic ``k`` (0-based) sits at probability ``k / n``; beyond the
sample extremes the inverse is held constant.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EmpiricalCDF:
    sorted_values: np.ndarray

    def __post_init__(self):
        x = np.sort(np.asarray(self.sorted_values, dtype=float))
        if x.ndim != 1 or x.size == 0:
            raise ValueError("empirical CDF needs a non-empty 1-D sample")
        object.__setattr__(self, "sorted_values", x)

    @property
    def n(self) -> int:
        return self.sorted_values.size

    def cdf(self, y):
        n = self.n
        if n == 1:
            return np.zeros(np.shape(y))[()]
        return np.interp(y, self.sorted_values, np.arange(n) / n)

    def ppf(self, p):
        n = self.n
        pos = np.clip(np.asarray(p, dtype=float) * n, 0.0, n - 1)
        return np.interp(pos, np.arange(n), self.sorted_values)
