"""Multiscale retention process on the unit cube (fractal percolation).

Level 1 splits the box into N^d congruent cells and keeps each with
probability p; every retained cell is split and thinned again, so the level-k
set is a union of side-(1/N^k) cells nested inside the level-(k-1) set.
Cells at level k are addressed by integer coordinates in [0, N^k)^d.

Retention of cell ``x`` at level ``k`` is decided by comparing a counter hash
of (seed, trial, level, row-major index of x) against floor(p * 2**64), and a
cell is retained only when its parent is. Consequences used heavily by the
tests: realizations are nested across levels by construction, raising p at a
fixed seed only ever adds cells, and any crossing/sheet indicator evaluated
on those sets inherits exact per-realization monotonicity in both k and p.

Two evaluation paths produce identical indicator bits: dense per-level masks
(numpy + scipy labeling, bounded by a cell budget) and a run-based row sweep
(numba) that never materializes the grid and so handles d=2 sides far beyond
the dense budget.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

import numpy as np

from . import rng
from ._kernels import sweep_trials
from .core import crossing, crossing_batch
from .lattice import Adjacency, BoxShape

DEFAULT_CELL_BUDGET = 1 << 26
BATCH_CELL_BUDGET = 1 << 23
# the row sweep never materializes the grid, so its cap is a time bound
SWEEP_CELL_BUDGET = 1 << 36


class BudgetError(ValueError):
    """A level grid would exceed the dense cell budget."""

    def __init__(self, level, cells, budget):
        self.level = level
        super().__init__(
            f"level {level} needs {cells} cells, over the {budget}-cell budget; "
            "lower k or N, or use the d=2 axis-0 path estimators which stream rows"
        )


@dataclass(frozen=True)
class FractalParams:
    """Model constants: subdivision N >= 2, dimension d >= 2, density p, depth k_max."""

    N: int
    d: int
    p: float
    k_max: int = 4

    def __post_init__(self):
        if int(self.N) < 2:
            raise ValueError("subdivision N must be >= 2")
        if int(self.d) < 2:
            raise ValueError("dimension d must be >= 2")
        if not 0.0 <= float(self.p) <= 1.0:
            raise ValueError("density p must lie in [0, 1]")
        if int(self.k_max) < 1:
            raise ValueError("k_max must be >= 1")

    def side(self, level):
        return int(self.N) ** int(level)

    def cells(self, level):
        return self.side(level) ** int(self.d)


@dataclass
class FractalRealization:
    """Dense per-level retained masks of one sampled realization."""

    params: FractalParams
    seed: int
    trial: int
    masks: list = field(repr=False)

    @property
    def retained_counts(self):
        return [int(m.sum()) for m in self.masks]

    def mask(self, level):
        if not 1 <= level <= len(self.masks):
            raise ValueError(f"level {level} outside 1..{len(self.masks)}")
        return self.masks[level - 1]

    def retained_cells(self, level):
        """Coordinates of retained level cells, row-major order, (n, d) ints."""
        return np.argwhere(self.mask(level))


def _upsample(mask, n):
    for ax in range(mask.ndim):
        mask = np.repeat(mask, n, axis=ax)
    return mask


def sample(params, seed, trial=0, budget=DEFAULT_CELL_BUDGET):
    """Draw one realization with dense masks for levels 1..k_max.

    Refuses (BudgetError, naming the offending level) rather than silently
    allocating beyond ``budget``.
    """
    for level in range(1, params.k_max + 1):
        if params.cells(level) > budget:
            raise BudgetError(level, params.cells(level), budget)
    tkey = rng.trial_key(seed, trial)
    thresh, all_open = rng.threshold(params.p)
    masks = []
    prev = None
    for level in range(1, params.k_max + 1):
        side = params.side(level)
        shape = (side,) * params.d
        if all_open:
            mask = np.ones(shape, dtype=bool)
        else:
            key = rng.level_key(tkey, level)
            mask = rng.fill_mask(key, side**params.d, thresh).reshape(shape)
        if prev is not None:
            mask &= _upsample(prev, params.N)
        masks.append(mask)
        prev = mask
    return FractalRealization(params, int(seed), int(trial), masks)


def level_crossing(realization, k, axis=0):
    """Edge-adjacency crossing of the level-k retained set along ``axis``."""
    return crossing(realization.mask(k), axis=axis, adjacency=Adjacency.EDGE).crossed


def level_sheet(realization, k, axis=0):
    """True when the level-k retained set still spans a blocking sheet.

    Equivalent formulation used here (and the only one implemented): the
    discarded cells admit no corner-adjacency crossing along ``axis``.
    Requires d >= 3; the degenerate d=2 statement is the duality identity and
    lives in :func:`fracperc.core.duality_check`.
    """
    if realization.params.d < 3:
        raise ValueError("sheet events need d >= 3")
    vacant = ~realization.mask(k)
    return not crossing(vacant, axis=axis, adjacency=Adjacency.CORNER).crossed


def dump_realization(realization, fp=None):
    """Write one line per retained cell: ``level,x_0,...,x_{d-1}``."""
    fp = fp if fp is not None else sys.stdout
    for level in range(1, len(realization.masks) + 1):
        for cell in realization.retained_cells(level):
            fp.write(",".join([str(level)] + [str(int(c)) for c in cell]) + "\n")


def _level_keys_matrix(seed, base_trial, trials, k):
    tkeys = rng.trial_key(seed, np.arange(base_trial, base_trial + trials))
    cols = [rng.level_key(tkeys, level) for level in range(1, k + 1)]
    return np.stack(cols, axis=1)


def level_indicator_trials(
    params,
    levels,
    trials,
    seed,
    base_trial=0,
    axis=0,
    kind="path",
    budget=DEFAULT_CELL_BUDGET,
):
    """Per-trial event indicators, shape (trials, len(levels)) uint8.

    kind="path": edge-adjacency crossing of the level set along ``axis``.
    kind="sheet": blocking-sheet indicator (d >= 3).

    Dispatches per level: d=2 axis-0 path events go through the run-based
    numba sweep at any size; everything else is evaluated on dense batched
    masks within ``budget`` cells per (trial, level) slice.
    """
    levels = [int(k) for k in levels]
    if any(k < 1 or k > params.k_max for k in levels):
        raise ValueError(f"levels {levels} outside 1..{params.k_max}")
    if kind not in ("path", "sheet"):
        raise ValueError(f"unknown indicator kind {kind!r}")
    if kind == "sheet" and params.d < 3:
        raise ValueError("sheet events need d >= 3")

    out = np.zeros((trials, len(levels)), dtype=np.uint8)
    thresh, all_open = rng.threshold(params.p)

    if kind == "path" and params.d == 2 and axis == 0:
        k_top = max(levels)
        if params.cells(k_top) > SWEEP_CELL_BUDGET:
            raise BudgetError(k_top, params.cells(k_top), SWEEP_CELL_BUDGET)
        keys = _level_keys_matrix(seed, base_trial, trials, k_top)
        for j, k in enumerate(levels):
            out[:, j] = sweep_trials(
                np.int64(params.N), np.int64(k), keys[:, :k].copy(), thresh, all_open
            )
        return out

    # dense batched route
    k_top = max(levels)
    if params.cells(k_top) > budget:
        raise BudgetError(k_top, params.cells(k_top), budget)
    chunk = max(1, min(trials, BATCH_CELL_BUDGET // max(params.cells(k_top), 1)))
    want = {k: j for j, k in enumerate(levels)}
    for start in range(0, trials, chunk):
        count = min(chunk, trials - start)
        tkeys = rng.trial_key(seed, np.arange(base_trial + start, base_trial + start + count))
        prev = None
        for k in range(1, k_top + 1):
            side = params.side(k)
            cells = side**params.d
            if all_open:
                masks = np.ones((count, cells), dtype=bool)
            elif count == 1:
                key = rng.level_key(rng.trial_key(seed, base_trial + start), k)
                masks = rng.fill_mask(key, cells, thresh)[None, :]
            else:
                lkeys = rng.level_key(tkeys, k)[:, None]
                masks = rng.cell_bits(lkeys, np.arange(cells, dtype=np.uint64)) < thresh
            masks = masks.reshape((count,) + (side,) * params.d)
            if prev is not None:
                up = prev
                for ax in range(1, params.d + 1):
                    up = np.repeat(up, params.N, axis=ax)
                masks &= up
            if k in want:
                if kind == "path":
                    got = crossing_batch(masks, Adjacency.EDGE, axis=axis)
                else:
                    got = ~crossing_batch(~masks, Adjacency.CORNER, axis=axis)
                out[start : start + count, want[k]] = got.astype(np.uint8)
            prev = masks
    return out
