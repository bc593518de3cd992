"""Local modification rules applied on top of Bernoulli site configurations.

Two single-pass rules, both evaluated against the *original* configuration
and applied simultaneously (no chaining through already-modified sites):

* opening rule: a site is opened with probability ``s`` when both of its
  neighbors along the crossing axis are open.  Crossings of the modified
  configuration are taken in the corner-sharing adjacency.
* closing rule: an open site is closed with probability ``s`` when every
  edge-sharing neighbor off the crossing axis is closed.  Crossings of the
  modified configuration are taken in the edge-sharing adjacency.

Sites outside the box can be pinned all-open or all-closed; by default the
rules quantify over in-box neighbors only.  Crossing events themselves
never involve outside sites.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import rng
from ._kernels import sweep_trials
from ._stats import MCEstimate
from .core import SiteConfig, crossing, crossing_batch
from .lattice import Adjacency, BoxShape, offsets


class Boundary(Enum):
    """How the modification rules treat neighbors outside the box."""

    DEFAULT = "default"
    OUTSIDE_OPEN = "outside_open"
    OUTSIDE_CLOSED = "outside_closed"


@dataclass(frozen=True)
class RuleParams:
    s: float
    boundary: Boundary = Boundary.DEFAULT
    axis: int = 0

    def __post_init__(self):
        if not 0.0 <= self.s <= 1.0:
            raise ValueError("activation probability s must lie in [0, 1]")


def _neighbor_state(mask, axis, step, fill):
    """State of the neighbor at +step along axis, with fill outside the box.

    Works on a trailing-d layout, so a stacked (trials, *sides) batch can
    pass axis offset by one.
    """
    out = np.full_like(mask, fill)
    src = [slice(None)] * mask.ndim
    dst = [slice(None)] * mask.ndim
    if step > 0:
        src[axis] = slice(step, None)
        dst[axis] = slice(None, -step)
    else:
        src[axis] = slice(None, step)
        dst[axis] = slice(-step, None)
    out[tuple(dst)] = mask[tuple(src)]
    return out


def enhancement_condition(open_mask, params, batch=False):
    """Sites whose both crossing-axis neighbors are open in the original."""
    ax = params.axis + (1 if batch else 0)
    fill = params.boundary is Boundary.OUTSIDE_OPEN
    return _neighbor_state(open_mask, ax, 1, fill) & _neighbor_state(
        open_mask, ax, -1, fill
    )


def diminishment_condition(open_mask, params, batch=False):
    """Sites with every off-axis edge neighbor closed in the original."""
    d = open_mask.ndim - (1 if batch else 0)
    shift = 1 if batch else 0
    # a missing neighbor counts as closed unless the outside is pinned open
    fill_open = params.boundary is Boundary.OUTSIDE_OPEN
    cond = np.ones(open_mask.shape, dtype=bool)
    for off in offsets(d, Adjacency.EDGE):
        nz = [i for i, c in enumerate(off) if c != 0]
        if len(nz) == 1 and nz[0] == params.axis:
            continue
        state = open_mask
        for i, c in enumerate(off):
            if c != 0:
                state = _neighbor_state(state, i + shift, c, fill_open)
        cond &= ~state
    return cond


def apply_enhancement(open_mask, activations, params, batch=False):
    cond = enhancement_condition(open_mask, params, batch)
    return open_mask | (cond & activations)


def apply_diminishment(open_mask, activations, params, batch=False):
    cond = diminishment_condition(open_mask, params, batch)
    return open_mask & ~(cond & activations)


def sample_activations(shape, s, seed, trial=0):
    """One activation mask per site, from the per-trial activation stream."""
    tkey = rng.trial_key(seed, trial)
    akey = rng.activation_key(tkey)
    thresh, all_on = rng.threshold(s)
    if all_on:
        return np.ones(shape.sides, dtype=bool)
    out = np.empty(shape.cells, dtype=bool)
    rng.fill_mask(akey, shape.cells, thresh, out)
    return out.reshape(shape.sides)


def modified_config(p, params, rule, shape, seed, trial=0):
    """Sample sites and activations, apply one rule, return both configs."""
    base = SiteConfig.bernoulli(shape, p, seed, trial=trial)
    act = sample_activations(shape, params.s, seed, trial=trial)
    apply = apply_enhancement if rule == "enhance" else apply_diminishment
    new = apply(base.open_mask, act, params)
    return base, SiteConfig(shape, new)


def rule_cross_indicators(rule, p, s, side, d, boundary, axis, seed, base_trial, trials):
    """Crossing indicators for `trials` modified configurations.

    rule is "enhance" (corner adjacency) or "diminish" (edge adjacency).
    Returns a (trials, 1) uint8 array so the result can be folded by the
    shared trial runner.
    """
    if rule not in ("enhance", "diminish"):
        raise ValueError("rule must be 'enhance' or 'diminish'")
    params = RuleParams(s=s, boundary=Boundary(boundary), axis=axis)
    shape = BoxShape.cube(side, d)
    tkeys = rng.trial_key(seed, np.arange(base_trial, base_trial + trials, dtype=np.uint64))
    site_keys = rng.sites_key(tkeys)
    thresh, all_open = rng.threshold(p)

    if rule == "diminish" and s == 0.0 and d == 2 and axis == 0:
        # plain edge-adjacency crossing; reuse the run-sweep kernel with
        # the site stream as a single-level key
        out = sweep_trials(
            np.int64(side), np.int64(1), site_keys[:, None].copy(), thresh, all_open
        )
        return out[:, None]

    cells = shape.cells
    out = np.empty((trials, 1), dtype=np.uint8)
    max_cells = 1 << 23
    step = max(1, min(trials, max_cells // max(cells, 1)))
    idx = np.arange(cells, dtype=np.uint64)
    a_thresh, a_all = rng.threshold(s)
    for lo in range(0, trials, step):
        hi = min(lo + step, trials)
        cnt = hi - lo
        if all_open:
            open_b = np.ones((cnt, cells), dtype=bool)
        else:
            open_b = rng.cell_bits(site_keys[lo:hi, None], idx) < thresh
        open_b = open_b.reshape((cnt,) + shape.sides)
        if s == 0.0:
            new = open_b
        else:
            act_keys = rng.activation_key(tkeys[lo:hi])
            if a_all:
                act = np.ones((cnt, cells), dtype=bool)
            else:
                act = rng.cell_bits(act_keys[:, None], idx) < a_thresh
            act = act.reshape((cnt,) + shape.sides)
            if rule == "enhance":
                new = apply_enhancement(open_b, act, params, batch=True)
            else:
                new = apply_diminishment(open_b, act, params, batch=True)
        adj = Adjacency.CORNER if rule == "enhance" else Adjacency.EDGE
        out[lo:hi, 0] = crossing_batch(new, adjacency=adj, axis=axis)
    return out


def phi_ns(p, s, side, d=2, boundary=Boundary.DEFAULT, axis=0, trials=1024, seed=1, base_trial=0):
    """Estimate the edge-adjacency crossing probability after the closing rule."""
    inds = rule_cross_indicators(
        "diminish", p, s, side, d, boundary.value, axis, seed, base_trial, trials
    )
    return MCEstimate.from_counts(int(inds.sum()), trials)


def psi_ns(p, s, side, d=2, boundary=Boundary.DEFAULT, axis=0, trials=1024, seed=1, base_trial=0):
    """Estimate the corner-adjacency crossing probability after the opening rule."""
    inds = rule_cross_indicators(
        "enhance", p, s, side, d, boundary.value, axis, seed, base_trial, trials
    )
    return MCEstimate.from_counts(int(inds.sum()), trials)


def essentiality_witness(rule, side=5, d=2):
    """A configuration where a single activated site flips the crossing.

    For the opening rule: an open row along axis 0 with one gap; the gap
    site has both axis neighbors open, and opening it creates a crossing.
    For the closing rule: a full open row; the middle site has all off-axis
    neighbors closed, and closing it severs the crossing.
    Returns a dict with the before/after configs and flags.
    """
    if side < 3:
        raise ValueError("need side >= 3 for a witness")
    shape = BoxShape.cube(side, d)
    mid = side // 2
    row = tuple([slice(None)] + [mid] * (d - 1))
    site = tuple([mid] * d)
    mask = np.zeros(shape.sides, dtype=bool)
    mask[row] = True
    act = np.zeros(shape.sides, dtype=bool)
    act[site] = True
    params = RuleParams(s=1.0)
    if rule == "enhance":
        mask[site] = False
        before = SiteConfig(shape, mask)
        new = apply_enhancement(mask, act, params)
        adj = Adjacency.CORNER
    elif rule == "diminish":
        before = SiteConfig(shape, mask)
        new = apply_diminishment(mask, act, params)
        adj = Adjacency.EDGE
    else:
        raise ValueError("rule must be 'enhance' or 'diminish'")
    after = SiteConfig(shape, new)
    crossed_before = crossing(before, axis=0, adjacency=adj).crossed
    crossed_after = crossing(after, axis=0, adjacency=adj).crossed
    return {
        "rule": rule,
        "site": site,
        "before": before,
        "after": after,
        "crossed_before": crossed_before,
        "crossed_after": crossed_after,
        "flipped": crossed_before != crossed_after,
    }
