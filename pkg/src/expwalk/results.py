"""Monte Carlo result container."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import stats

__all__ = ["Estimate"]


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo estimate.

    When ``log_domain`` is set, ``value`` is the log of the estimated
    quantity and ``stderr`` its delta-method standard error.  ``trace``
    holds per-term or per-horizon sub-estimates for series estimators and
    ``info`` any diagnostics (truncation rates, tail bounds, ...).
    """

    value: float
    stderr: float
    n_samples: int
    method: str
    log_domain: bool = False
    trace: Optional[tuple] = None
    info: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_samples(cls, samples, method: str, **info) -> "Estimate":
        x = np.asarray(samples, dtype=float).ravel()
        n = x.size
        if n == 0:
            raise ValueError("no samples")
        mean = float(x.mean())
        se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        return cls(mean, se, n, method, info=dict(info))

    def ci(self, level: float = 0.95) -> tuple[float, float]:
        z = float(stats.norm.ppf(0.5 + level / 2.0))
        return (self.value - z * self.stderr, self.value + z * self.stderr)

    def linear(self) -> "Estimate":
        """The estimate on the natural scale."""
        if not self.log_domain:
            return self
        v = math.exp(self.value)
        return replace(self, value=v, stderr=v * self.stderr, log_domain=False)

    def log(self) -> "Estimate":
        if self.log_domain:
            return self
        if self.value <= 0:
            raise ValueError("log of a nonpositive estimate")
        return replace(self, value=math.log(self.value), stderr=self.stderr / self.value,
                       log_domain=True)

    def scaled(self, log_factor: float) -> "Estimate":
        """Multiply by ``exp(log_factor)``, moving to the log domain on underflow."""
        if self.log_domain:
            return replace(self, value=self.value + log_factor)
        factor = math.exp(log_factor) if log_factor < 709 else math.inf
        v = self.value * factor
        if self.value > 0 and (factor == 0.0 or v == 0.0 or not math.isfinite(v)
                               or abs(v) < 1e-300):
            return replace(self.log(), value=math.log(self.value) + log_factor)
        return replace(self, value=v, stderr=self.stderr * factor)

    def merge(self, other: "Estimate") -> "Estimate":
        """Pool two independent estimates of the same quantity.

        The pooled standard error is that of the concatenated sample, so
        merging is associative and order independent.
        """
        if self.log_domain or other.log_domain:
            raise ValueError("merge linear-domain estimates")
        n1, n2 = self.n_samples, other.n_samples
        n = n1 + n2
        m = (n1 * self.value + n2 * other.value) / n
        ss1 = (self.stderr**2) * n1 * (n1 - 1)
        ss2 = (other.stderr**2) * n2 * (n2 - 1)
        between = n1 * n2 / n * (self.value - other.value) ** 2
        var = (ss1 + ss2 + between) / (n - 1)
        return Estimate(m, math.sqrt(var / n), n, self.method, info=dict(self.info))

    def agrees_with(self, other: "Estimate | float", k: float = 3.0) -> bool:
        """Within ``k`` combined standard errors."""
        if isinstance(other, Estimate):
            return abs(self.value - other.value) <= k * math.hypot(self.stderr, other.stderr)
        return abs(self.value - other) <= k * self.stderr
