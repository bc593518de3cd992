"""Binomial point estimates and Wilson score intervals."""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

Z95 = 1.959963984540054
Z95_ONE_SIDED = 1.6448536269514722


def wilson(successes, trials, z=Z95):
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    n = float(trials)
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2.0 * n)) / denom
    half = z * sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo proportion with its 95% Wilson interval."""

    successes: int
    trials: int
    p_hat: float
    ci_low: float
    ci_high: float

    @classmethod
    def from_counts(cls, successes, trials, z=Z95):
        lo, hi = wilson(successes, trials, z)
        return cls(int(successes), int(trials), successes / trials, lo, hi)

    def separated_from(self, tau):
        """CI excludes tau: +1 above, -1 below, 0 undecided."""
        if self.ci_low > tau:
            return 1
        if self.ci_high < tau:
            return -1
        return 0
