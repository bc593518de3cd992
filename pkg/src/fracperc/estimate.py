"""Monte Carlo estimators and search procedures built on the samplers.

Everything here folds per-trial 0/1 indicators, so results are exact
functions of (seed, trial index) and do not depend on how trials are
partitioned across worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from multiprocessing import get_context
from typing import Optional

import numpy as np

from . import enhance, rng
from ._stats import MCEstimate, Z95, Z95_ONE_SIDED, wilson
from .fractal import FractalParams, level_indicator_trials
from .lattice import Adjacency

__all__ = [
    "MCEstimate",
    "wilson",
    "Z95",
    "Z95_ONE_SIDED",
    "LevelSequenceEstimate",
    "CriticalEstimate",
    "CorrLenResult",
    "ScalingFit",
    "CouplingCheck",
    "ThetaTarget",
    "RuleTarget",
    "run_indicator_trials",
    "rule_estimate",
    "theta_estimate",
    "theta_tilde_estimate",
    "critical_point",
    "lattice_critical_point",
    "correlation_length",
    "scaling_experiment",
    "coupling_inequality_check",
]


def _fractal_indicators(args, seed, base, count):
    n, d, p, k_max, levels, axis, kind = args
    params = FractalParams(N=n, d=d, p=p, k_max=k_max)
    return level_indicator_trials(
        params, levels, count, seed, base_trial=base, axis=axis, kind=kind
    )


def _rule_indicators(args, seed, base, count):
    rule, p, s, side, d, boundary, axis = args
    return enhance.rule_cross_indicators(
        rule, p, s, side, d, boundary, axis, seed, base, count
    )


def run_indicator_trials(worker, args, trials, seed, base_trial=0, threads=1):
    """Run `trials` indicator trials, optionally across processes.

    worker(args, seed, base, count) must return a (count, m) uint8 array
    whose rows depend only on the absolute trial index, so any split of
    the range [base_trial, base_trial+trials) folds to the same matrix.
    """
    if trials <= 0:
        raise ValueError("trials must be positive")
    if threads <= 1:
        return worker(args, seed, base_trial, trials)
    pieces = min(trials, threads * 4)
    step = (trials + pieces - 1) // pieces
    ctx = get_context("fork")
    parts = []
    with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as pool:
        futs = []
        for lo in range(0, trials, step):
            cnt = min(step, trials - lo)
            futs.append(pool.submit(worker, args, seed, base_trial + lo, cnt))
        for fut in futs:
            parts.append(fut.result())
    return np.vstack(parts)


@dataclass(frozen=True)
class LevelSequenceEstimate:
    """Crossing estimates for a run of construction levels."""

    levels: tuple
    estimates: tuple

    def at(self, level):
        return self.estimates[self.levels.index(level)]


def theta_estimate(params, levels=None, trials=1024, seed=1, threads=1, axis=0, kind="path"):
    if levels is None:
        levels = tuple(range(1, params.k_max + 1))
    levels = tuple(int(k) for k in levels)
    args = (params.N, params.d, params.p, params.k_max, levels, axis, kind)
    inds = run_indicator_trials(_fractal_indicators, args, trials, seed, threads=threads)
    sums = inds.sum(axis=0)
    ests = tuple(MCEstimate.from_counts(int(s), trials) for s in sums)
    return LevelSequenceEstimate(levels=levels, estimates=ests)


def theta_tilde_estimate(params, levels=None, trials=1024, seed=1, threads=1, axis=0):
    return theta_estimate(
        params, levels=levels, trials=trials, seed=seed, threads=threads, axis=axis, kind="sheet"
    )


@dataclass(frozen=True)
class ThetaTarget:
    """Level-k crossing probability of the iterated construction."""

    N: int
    d: int
    level: int
    axis: int = 0
    kind: str = "path"
    k_max: Optional[int] = None

    def describe(self):
        return {
            "target": "theta" if self.kind == "path" else "theta_tilde",
            "N": self.N,
            "d": self.d,
            "level": self.level,
            "axis": self.axis,
        }

    def indicators(self, p, seed, base, count, threads=1):
        k_max = self.k_max if self.k_max is not None else self.level
        args = (self.N, self.d, p, max(k_max, self.level), (self.level,), self.axis, self.kind)
        return run_indicator_trials(
            _fractal_indicators, args, count, seed, base_trial=base, threads=threads
        )[:, 0]


@dataclass(frozen=True)
class RuleTarget:
    """Crossing probability after one modification rule (s=0 gives the
    plain site model: edge adjacency for "diminish", corner for "enhance")."""

    rule: str
    side: int
    d: int = 2
    s: float = 0.0
    boundary: str = "default"
    axis: int = 0

    def describe(self):
        name = "phi" if self.rule == "diminish" else "psi"
        return {
            "target": name,
            "side": self.side,
            "d": self.d,
            "s": self.s,
            "boundary": self.boundary,
            "axis": self.axis,
        }

    def indicators(self, p, seed, base, count, threads=1):
        args = (self.rule, p, self.s, self.side, self.d, self.boundary, self.axis)
        return run_indicator_trials(
            _rule_indicators, args, count, seed, base_trial=base, threads=threads
        )[:, 0]


def rule_estimate(rule, p, s, side, d=2, boundary="default", axis=0, trials=1024, seed=1, threads=1):
    """Crossing estimate after one modification rule, across processes."""
    args = (rule, p, s, side, d, boundary, axis)
    inds = run_indicator_trials(_rule_indicators, args, trials, seed, threads=threads)
    return MCEstimate.from_counts(int(inds.sum()), trials)


@dataclass(frozen=True)
class CriticalEstimate:
    p_low: float
    p_high: float
    tau: float
    flag: str
    steps: tuple
    target: dict

    @property
    def p_mid(self):
        return 0.5 * (self.p_low + self.p_high)

    @property
    def half_width(self):
        return 0.5 * (self.p_high - self.p_low)


def _separated_estimate(target, p, seed, tau, trials_start, trials_cap, threads):
    """Escalate trial counts until the Wilson CI excludes tau (or cap)."""
    total = 0
    succ = 0
    goal = trials_start
    while True:
        add = goal - total
        inds = target.indicators(p, seed, total, add, threads=threads)
        succ += int(np.asarray(inds).sum())
        total = goal
        est = MCEstimate.from_counts(succ, total)
        if est.separated_from(tau) != 0 or total >= trials_cap:
            return est
        goal = min(2 * total, trials_cap)


def critical_point(
    target,
    seed=1,
    tau=0.5,
    bracket=(0.0, 1.0),
    p_tol=1.0 / 256,
    trials_start=256,
    trials_cap=8192,
    threads=1,
    check_endpoints=True,
):
    """Stochastic bisection for the parameter where the target crosses tau.

    Successive probes reuse the same trial indices, so for targets that are
    monotone under the shared-threshold coupling the empirical proportions
    are themselves monotone in p and bisection cannot contradict itself.
    An undecided probe at the trial cap is resolved by the point estimate
    and recorded in the flag.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise ValueError("bracket must be increasing")
    flag = "ok"
    steps = []
    if check_endpoints:
        e_lo = _separated_estimate(target, lo, seed, tau, trials_start, trials_cap, threads)
        steps.append((lo, e_lo))
        if e_lo.separated_from(tau) != -1:
            flag = "bracket"
        e_hi = _separated_estimate(target, hi, seed, tau, trials_start, trials_cap, threads)
        steps.append((hi, e_hi))
        if e_hi.separated_from(tau) != 1:
            flag = "bracket"
    while hi - lo > p_tol:
        mid = 0.5 * (lo + hi)
        est = _separated_estimate(target, mid, seed, tau, trials_start, trials_cap, threads)
        steps.append((mid, est))
        side = est.separated_from(tau)
        if side == 0:
            if flag == "ok":
                flag = "budget"
            side = 1 if est.p_hat >= tau else -1
        if side > 0:
            hi = mid
        else:
            lo = mid
    return CriticalEstimate(
        p_low=lo, p_high=hi, tau=tau, flag=flag, steps=tuple(steps), target=target.describe()
    )


def lattice_critical_point(adjacency=Adjacency.EDGE, d=2, side=256, seed=1, **kw):
    """Critical density of the plain site model on a single box."""
    rule = "diminish" if adjacency is Adjacency.EDGE else "enhance"
    target = RuleTarget(rule=rule, side=side, d=d, s=0.0)
    return critical_point(target, seed=seed, **kw)


@dataclass(frozen=True)
class CorrLenResult:
    side: Optional[int]
    p: float
    delta: float
    flag: str
    probes: tuple


def correlation_length(
    p,
    delta,
    d=2,
    seed=1,
    trials_start=256,
    trials_cap=8192,
    threads=1,
    side_cap=4096,
):
    """Smallest box side whose plain-site crossing probability reaches 1-delta.

    Doubles the side until the target is reached, then bisects on the side.
    Edge adjacency, axis-0 crossing.
    """
    tau = 1.0 - delta
    flag = "ok"
    probes = []

    def decide(n):
        nonlocal flag
        target = RuleTarget(rule="diminish", side=n, d=d, s=0.0)
        est = _separated_estimate(target, p, seed, tau, trials_start, trials_cap, threads)
        side_of = est.separated_from(tau)
        if side_of == 0:
            if flag == "ok":
                flag = "budget"
            side_of = 1 if est.p_hat >= tau else -1
        probes.append((n, est, side_of))
        return side_of

    n = 1
    if decide(n) > 0:
        return CorrLenResult(side=1, p=p, delta=delta, flag=flag, probes=tuple(probes))
    while True:
        prev, n = n, n * 2
        if n > side_cap:
            return CorrLenResult(side=None, p=p, delta=delta, flag="unreached", probes=tuple(probes))
        if decide(n) > 0:
            break
    lo, hi = prev, n
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if decide(mid) > 0:
            hi = mid
        else:
            lo = mid
    return CorrLenResult(side=hi, p=p, delta=delta, flag=flag, probes=tuple(probes))


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    stderr: float
    intercept: float
    points: tuple
    flag: str
    reference: dict


def scaling_experiment(
    n_list,
    level=2,
    d=2,
    seed=1,
    reference=None,
    reference_side=256,
    side_floor=None,
    p_tol=1.0 / 512,
    trials_start=256,
    trials_cap=8192,
    threads=1,
):
    """Fit the decay rate of the level critical point toward the lattice one.

    For each N the level-k crossing retention threshold is located by
    bisection; the gap to the plain-lattice critical density is regressed
    against 1/N on log-log axes with inverse-variance weights.

    With the default `side_floor=None` every N uses the fixed `level`.  A
    fixed shallow level underestimates the threshold badly for small N
    (the grid N^level is tiny there), which flattens the fitted decay, so
    for exponent work pass `side_floor`: each N then deepens its level
    until the realized grid side N^k reaches the floor, keeping the
    finite-size residual comparable across the sweep.
    """
    if reference is None:
        reference = lattice_critical_point(
            d=d,
            side=reference_side,
            seed=seed,
            p_tol=p_tol,
            trials_start=trials_start,
            trials_cap=trials_cap,
            threads=threads,
        )
    flag = "ok" if reference.flag == "ok" else reference.flag
    points = []
    xs, ys, ws = [], [], []
    for n in n_list:
        n = int(n)
        k = level
        if side_floor is not None:
            while n ** k < side_floor:
                k += 1
        tgt = ThetaTarget(N=n, d=d, level=k)
        ce = critical_point(
            tgt,
            seed=seed,
            p_tol=p_tol,
            trials_start=trials_start,
            trials_cap=trials_cap,
            threads=threads,
        )
        gap = ce.p_mid - reference.p_mid
        sigma = math.hypot(ce.half_width, reference.half_width)
        point = {
            "N": n, "level": k, "p_mid": ce.p_mid,
            "gap": gap, "sigma": sigma, "flag": ce.flag,
        }
        points.append(point)
        if ce.flag not in ("ok",) and flag == "ok":
            flag = ce.flag
        if gap <= 0:
            flag = "nonpositive-gap"
            continue
        xs.append(math.log(1.0 / n))
        ys.append(math.log(gap))
        ws.append((gap / sigma) ** 2 if sigma > 0 else 1.0)
    if len(xs) < 2:
        return ScalingFit(
            slope=float("nan"),
            stderr=float("nan"),
            intercept=float("nan"),
            points=tuple(points),
            flag="degenerate",
            reference=reference.target | {"p_mid": reference.p_mid},
        )
    x = np.array(xs)
    y = np.array(ys)
    w = np.array(ws)
    xbar = float(np.sum(w * x) / np.sum(w))
    ybar = float(np.sum(w * y) / np.sum(w))
    sxx = float(np.sum(w * (x - xbar) ** 2))
    slope = float(np.sum(w * (x - xbar) * (y - ybar)) / sxx)
    intercept = ybar - slope * xbar
    stderr = math.sqrt(1.0 / sxx)
    return ScalingFit(
        slope=slope,
        stderr=stderr,
        intercept=intercept,
        points=tuple(points),
        flag=flag,
        reference=reference.target | {"p_mid": reference.p_mid},
    )


@dataclass(frozen=True)
class CouplingCheck:
    kind: str
    lhs: MCEstimate
    rhs_low: float
    rhs_high: float
    s_plug: float
    satisfied: bool
    detail: dict


def _subseed(seed, tag):
    return int(rng.derive_key(np.uint64(seed), np.uint64(0x55), np.uint64(tag)))


def coupling_inequality_check(p, n, k, d=2, trials=2048, seed=1, threads=1, sheet=False):
    """Compare the level-k crossing rate against its one-box dominating system.

    Path variant: the level-k probability should not exceed the closing-rule
    crossing probability on the N^k box at density p with per-site closing
    rate 1 - theta_hat and the outside pinned closed.  Sheet variant (d>=3):
    the level-k sheet probability against one minus the opening-rule crossing
    at density 1-p with the outside pinned open.  `satisfied` is False only
    when the confidence intervals are strictly ordered the wrong way.
    """
    side = n ** k
    params = FractalParams(N=n, d=d, p=p, k_max=k)
    kind = "sheet" if sheet else "path"
    lhs = theta_estimate(
        params, levels=(k,), trials=trials, seed=seed, threads=threads, kind=kind
    ).at(k)
    s_plug = 1.0 - lhs.p_hat
    sub = _subseed(seed, 1)
    if not sheet:
        args = ("diminish", p, s_plug, side, d, "outside_closed", 0)
        inds = run_indicator_trials(_rule_indicators, args, trials, sub, threads=threads)
        rhs = MCEstimate.from_counts(int(inds.sum()), trials)
        rhs_low, rhs_high = rhs.ci_low, rhs.ci_high
        detail = {"rhs": rhs}
    else:
        args = ("enhance", 1.0 - p, s_plug, side, d, "outside_open", 0)
        inds = run_indicator_trials(_rule_indicators, args, trials, sub, threads=threads)
        psi = MCEstimate.from_counts(int(inds.sum()), trials)
        rhs_low, rhs_high = 1.0 - psi.ci_high, 1.0 - psi.ci_low
        detail = {"psi": psi}
    satisfied = not (lhs.ci_low > rhs_high)
    return CouplingCheck(
        kind=kind,
        lhs=lhs,
        rhs_low=rhs_low,
        rhs_high=rhs_high,
        s_plug=s_plug,
        satisfied=satisfied,
        detail=detail,
    )
