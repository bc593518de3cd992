"""Deterministic lower-bound machinery for crossing probabilities.

Implements the defect-propagation functions f, g, h, their fixed points,
the worst-case defect recursion, and the resulting crossing lower bound.
All evaluations raise DomainError at or past the pole g*y^(1/4) >= 1;
nothing is silently clamped except the final probability bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from . import rng
from ._stats import MCEstimate
from .core import crossing_batch
from .lattice import BoxShape


class DomainError(ValueError):
    """Evaluation at or past the pole of the defect functions."""


@dataclass(frozen=True)
class BoundParams:
    N: int
    m: int
    delta1: float
    c3: float = 1.0
    c4: float = 1.0
    g: float = 3.0
    c5: Optional[float] = None
    y0: Optional[float] = None
    D: float = 1.0
    c2_delta0: float = 1.0

    def __post_init__(self):
        if self.N < 2 or self.m < 1 or self.m > self.N:
            raise ValueError("need N >= 2 and 1 <= m <= N")
        if not 0.0 < self.delta1 < 1.0:
            raise ValueError("delta1 must lie in (0, 1)")
        if self.c3 <= 0 or self.c4 <= 0:
            raise ValueError("c3 and c4 must be positive")
        if not 0.0 < self.g <= 3.0:
            raise ValueError("g must lie in (0, 3]")
        if self.D <= 0 or self.c2_delta0 <= 0:
            raise ValueError("D and c2_delta0 must be positive")
        if self.y0 is not None:
            u0 = self.g * self.y0 ** 0.25
            if not 0.0 < u0 < 1.0:
                raise ValueError("y0 must satisfy g*y0^(1/4) < 1")
            derived = self.c3 / (1.0 - u0)
            if self.c5 is None:
                object.__setattr__(self, "c5", derived)
            elif not math.isclose(self.c5, derived, rel_tol=1e-12):
                raise ValueError("c5 inconsistent with y0")
        if self.c5 is not None and self.c5 <= 0:
            raise ValueError("c5 must be positive")

    @classmethod
    def from_y0(cls, N, m, y0, **kw):
        """Standard setup: delta1 = y0/2 and c5 derived from y0."""
        return cls(N=N, m=m, delta1=y0 / 2.0, y0=y0, **kw)

    def with_n(self, n):
        m = min(self.m, n)
        return replace(self, N=n, m=m)


def _pole_factor(params, y):
    if y <= 0.0:
        raise DomainError("y must be positive")
    u = params.g * y ** 0.25
    if u >= 1.0:
        raise DomainError(f"g*y^(1/4) = {u:.6g} >= 1: past the pole")
    return u


def f_eval(params, y):
    u = _pole_factor(params, y)
    return params.c3 / (y * (1.0 - u)) * params.N ** 2 * u ** (params.N / (2.0 * params.m))


def g_eval(params, y):
    u = _pole_factor(params, y)
    return (
        params.c4 / (y * (1.0 - u)) * (params.N / params.m) * u ** (params.N / (2.0 * params.m))
    )


def h_exponent(params, n=None):
    n = params.N if n is None else n
    return params.D ** (4.0 / 3.0) / (2.0 * params.c2_delta0) * math.log(n)


def h_eval(params, y, n=None):
    if params.c5 is None:
        raise ValueError("h_eval needs c5 (set y0 or c5 on the params)")
    if params.y0 is not None and y > params.y0:
        raise DomainError("h is only controlled for y <= y0")
    n = params.N if n is None else n
    u = _pole_factor(params, y)
    return params.c5 / y * n ** 2 * u ** h_exponent(params, n)


def m_cap(params, n=None):
    """Largest m compatible with the h-domination condition at this N."""
    n = params.N if n is None else n
    return params.c2_delta0 / params.D ** (4.0 / 3.0) * n / math.log(n)


def min_decay_D(c2_delta0, g, y0):
    """Smallest D making h_N(y) -> 0 for every fixed y <= y0."""
    u0 = g * y0 ** 0.25
    if not 0.0 < u0 < 1.0:
        raise DomainError("need g*y0^(1/4) < 1")
    return (4.0 * c2_delta0 / (-math.log(u0))) ** 0.75


def fixed_point(map_fn: Callable[[float], float], y_range, tol=1e-12, grid=4096):
    """Smallest root of y = map_fn(y) in y_range, or None.

    Scans a uniform grid for the first sign change of y - map_fn(y), then
    bisects.  Points where the map is undefined (DomainError) are skipped,
    which truncates the scan at the pole.
    """
    lo, hi = y_range
    if not lo < hi:
        raise ValueError("y_range must be increasing")
    ys = np.linspace(lo, hi, grid)

    def residual(y):
        return y - map_fn(y)

    prev_y = None
    prev_r = None
    for y in ys:
        try:
            r = residual(float(y))
        except DomainError:
            break
        if r == 0.0:
            return float(y)
        if prev_r is not None and prev_r < 0.0 < r:
            a, b = prev_y, float(y)
            while b - a > tol:
                mid = 0.5 * (a + b)
                if residual(mid) < 0.0:
                    a = mid
                else:
                    b = mid
            return 0.5 * (a + b)
        prev_y, prev_r = float(y), r
    return None


def _map_range(params):
    hi = (1.0 / params.g) ** 4
    if params.y0 is not None:
        hi = min(hi, params.y0)
    # stay off the exact pole / domain edge
    return (1e-15, hi * (1.0 - 1e-9))


def y1_root(params, tol=1e-12):
    return fixed_point(lambda y: params.delta1 + f_eval(params, y), _map_range(params), tol)


def y2_root(params, n=None, tol=1e-12):
    return fixed_point(
        lambda y: params.delta1 + h_eval(params, y, n), _map_range(params), tol
    )


@dataclass(frozen=True)
class IterationState:
    k: int
    delta_k: float

    @property
    def pi_k(self):
        return 1.0 - self.delta_k


@dataclass(frozen=True)
class IterationResult:
    states: tuple
    converged: bool
    diverged: bool

    @property
    def delta_star(self):
        """Iteration limit; None unless the recursion actually settled."""
        if not self.converged:
            return None
        return self.states[-1].delta_k


def delta_iteration(params, k_max=100000, tol=1e-12):
    """Worst-case defect recursion delta_k = delta1 + f(delta_{k-1}).

    Stops at |delta_k - delta_{k-1}| < tol (converged), at k_max, or when
    the sequence leaves the domain of f (diverged).
    """
    states = [IterationState(k=1, delta_k=params.delta1)]
    prev = params.delta1
    for k in range(2, k_max + 1):
        try:
            cur = params.delta1 + f_eval(params, prev)
        except DomainError:
            return IterationResult(states=tuple(states), converged=False, diverged=True)
        states.append(IterationState(k=k, delta_k=cur))
        if cur >= 1.0:
            return IterationResult(states=tuple(states), converged=False, diverged=True)
        if abs(cur - prev) < tol:
            return IterationResult(states=tuple(states), converged=True, diverged=False)
        prev = cur
    return IterationResult(states=tuple(states), converged=False, diverged=False)


@dataclass(frozen=True)
class LowerBound:
    g_form: float
    h_form: Optional[float]
    bound: float


def crossing_lower_bound(params, delta_k):
    """Crossing probability lower bound 1 - g(delta_k), clamped to [0, 1].

    The looser h-based form 1 - (c4/c3) h(delta_k)/N is reported alongside
    when c5 is available; it never exceeds the g-form while m stays within
    m_cap.
    """
    g_form = 1.0 - g_eval(params, delta_k)
    h_form = None
    if params.c5 is not None:
        h_form = 1.0 - params.c4 / params.c3 * h_eval(params, delta_k) / params.N
    bound = min(1.0, max(0.0, g_form))
    return LowerBound(g_form=g_form, h_form=h_form, bound=bound)


@dataclass(frozen=True)
class BoundTableRow:
    N: int
    m: int
    delta1: float
    delta_star: Optional[float]
    y1: Optional[float]
    y2: Optional[float]
    bound: Optional[float]
    flag: str


def bound_table_row(params):
    """One summary row: fixed points, iteration limit, final bound."""
    y1 = y1_root(params)
    y2 = y2_root(params) if params.c5 is not None else None
    it = delta_iteration(params)
    if it.diverged or not it.converged:
        return BoundTableRow(
            N=params.N,
            m=params.m,
            delta1=params.delta1,
            delta_star=None,
            y1=y1,
            y2=y2,
            bound=None,
            flag="diverged" if it.diverged else "no-convergence",
        )
    ds = it.delta_star
    lb = crossing_lower_bound(params, ds)
    return BoundTableRow(
        N=params.N,
        m=params.m,
        delta1=params.delta1,
        delta_star=ds,
        y1=y1,
        y2=y2,
        bound=lb.bound,
        flag="ok",
    )


def b1_indicators(p, m, seed, base_trial, trials):
    """Indicators of the three-crossing rectangle event on a 3m x m box.

    The event asks for a long-axis crossing of the full rectangle plus a
    short-axis crossing in each of the left and right thirds, all in edge
    adjacency on plain Bernoulli sites.  Returns (trials, 1) uint8.
    """
    if m < 3 or m % 3 != 0:
        raise ValueError("m must be a positive multiple of 3")
    shape = BoxShape(sides=(3 * m, m))
    tkeys = rng.trial_key(seed, np.arange(base_trial, base_trial + trials, dtype=np.uint64))
    site_keys = rng.sites_key(tkeys)
    thresh, all_open = rng.threshold(p)
    cells = shape.cells
    out = np.empty((trials, 1), dtype=np.uint8)
    step = max(1, min(trials, (1 << 23) // cells))
    idx = np.arange(cells, dtype=np.uint64)
    for lo in range(0, trials, step):
        hi = min(lo + step, trials)
        cnt = hi - lo
        if all_open:
            masks = np.ones((cnt,) + shape.sides, dtype=bool)
        else:
            masks = (rng.cell_bits(site_keys[lo:hi, None], idx) < thresh).reshape(
                (cnt,) + shape.sides
            )
        long_cross = crossing_batch(masks, axis=0)
        left = crossing_batch(masks[:, :m, :], axis=1)
        right = crossing_batch(masks[:, 2 * m :, :], axis=1)
        out[lo:hi, 0] = long_cross & left & right
    return out


def b1_estimate(p, m, trials=4096, seed=1, base_trial=0):
    inds = b1_indicators(p, m, seed, base_trial, trials)
    return MCEstimate.from_counts(int(inds.sum()), trials)


def b1_exact_counts(m=3):
    """Exhaustive histogram of the rectangle event by open-site count.

    Only feasible for m = 3 (27 cells, 2^27 configurations); the counts
    feed an exact polynomial in p through core.counts_to_prob.
    """
    from ._kernels import config_crosses, rectangle_event_counts
    from .lattice import Adjacency, face_bitmask, neighbor_bitmasks

    if m != 3:
        raise ValueError("exhaustive enumeration is only supported for m = 3")
    shape = BoxShape(sides=(3 * m, m))
    nbr = neighbor_bitmasks(shape, Adjacency.EDGE)
    low = face_bitmask(shape, axis=0, high=False)
    high = face_bitmask(shape, axis=0, high=True)
    third = BoxShape(sides=(m, m))
    tn = neighbor_bitmasks(third, Adjacency.EDGE)
    tlow = face_bitmask(third, axis=1, high=False)
    thigh = face_bitmask(third, axis=1, high=True)
    table = np.zeros(1 << (m * m), dtype=np.uint8)
    for cfg in range(1 << (m * m)):
        table[cfg] = config_crosses(tn, tlow, thigh, np.int64(cfg))
    return rectangle_event_counts(nbr, low, high, table, np.int64(m), np.int64(shape.cells))
