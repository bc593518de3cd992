"""Site configurations on finite boxes: crossings, blocking paths, exact curves.

A configuration is a boolean open/closed state per cell of a box, plus an
optional homogeneous state for everything outside the box. Crossing events
are always evaluated strictly inside the box; the outside state exists for
the enhancement/diminishment neighbor rules (:mod:`fracperc.enhance`) and
never joins clusters.

Two routes to the same answers live here: scipy.ndimage labeling for
arbitrary configurations, and an exhaustive bitboard enumeration (numba) that
turns small boxes into exact polynomial crossing curves. They are
cross-checked in the tests, and a third, run-based engine for large d=2
grids lives in :mod:`fracperc._kernels`.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.ndimage as ndi

from . import lattice as lat
from . import rng
from ._kernels import crossing_counts
from .lattice import Adjacency, BoxShape

ENUMERATION_CELL_CAP = 25


class EnumerationCapError(ValueError):
    """Raised when an exact enumeration would exceed the cell cap."""


@dataclass
class SiteConfig:
    """Open/closed states on a box; ``outside`` is None (ignored), open, or closed."""

    shape: BoxShape
    open_mask: np.ndarray
    outside: Optional[bool] = None

    def __post_init__(self):
        self.open_mask = np.asarray(self.open_mask, dtype=bool)
        if self.open_mask.shape != self.shape.sides:
            raise ValueError(
                f"mask shape {self.open_mask.shape} != box {self.shape.sides}"
            )

    @classmethod
    def from_mask(cls, mask, outside=None):
        mask = np.asarray(mask, dtype=bool)
        return cls(BoxShape(mask.shape), mask, outside)

    @classmethod
    def bernoulli(cls, shape, p, seed, trial=0, outside=None):
        """iid density-p configuration from the package's counter PRF."""
        skey = rng.sites_key(rng.trial_key(seed, trial))
        thresh, all_open = rng.threshold(p)
        if all_open:
            mask = np.ones(shape.sides, dtype=bool)
        else:
            mask = rng.fill_mask(skey, shape.cells, thresh).reshape(shape.sides)
        return cls(shape, mask, outside)


@dataclass
class CrossingReport:
    crossed: bool
    cluster_count: int
    witness: Optional[list] = None


def _as_mask(config):
    return config.open_mask if isinstance(config, SiteConfig) else np.asarray(config, bool)


def crossing(config, axis=0, adjacency=Adjacency.EDGE, want_witness=False):
    """Face-to-face crossing of open cells along ``axis``.

    Returns a CrossingReport with the total open-cluster count and, on
    request, one explicit crossing path (list of cell tuples, consecutive
    cells adjacent under ``adjacency``). Witness extraction walks the
    crossing cluster cell by cell and is meant for small boxes.
    """
    mask = _as_mask(config)
    structure = lat.ndimage_structure(mask.ndim, adjacency)
    labels, n_clusters = ndi.label(mask, structure=structure)
    low = np.take(labels, 0, axis=axis)
    high = np.take(labels, mask.shape[axis] - 1, axis=axis)
    common = np.intersect1d(low[low > 0], high[high > 0])
    crossed = common.size > 0
    witness = None
    if crossed and want_witness:
        witness = _witness_path(mask, labels, int(common[0]), axis, adjacency)
    return CrossingReport(bool(crossed), int(n_clusters), witness)


def _witness_path(mask, labels, label, axis, adjacency):
    """BFS a shortest path of ``label`` cells from the low to the high face."""
    shape = BoxShape(mask.shape)
    offs = [tuple(int(o) for o in off) for off in lat.offsets(shape.d, adjacency)]
    side = mask.shape[axis]
    starts = [
        tuple(map(int, c))
        for c in np.argwhere((labels == label) & (np.indices(mask.shape)[axis] == 0))
    ]
    parent = {c: None for c in starts}
    q = deque(starts)
    while q:
        cell = q.popleft()
        if cell[axis] == side - 1:
            path = []
            while cell is not None:
                path.append(cell)
                cell = parent[cell]
            path.reverse()
            return path
        for off in offs:
            nb = tuple(c + o for c, o in zip(cell, off))
            if nb in parent or not shape.contains(nb):
                continue
            if labels[nb] == label:
                parent[nb] = cell
                q.append(nb)
    raise RuntimeError("crossing cluster lost between faces")  # unreachable


def sheet_blocked(config, axis=0):
    """True when closed cells cross the box along ``axis`` under CORNER adjacency.

    Such a closed path is exactly what rules out a separating open sheet
    orthogonal to ``axis``; any d >= 2 is accepted (d=2 is the degenerate
    case used by the duality identity).
    """
    mask = _as_mask(config)
    return crossing(~mask, axis=axis, adjacency=Adjacency.CORNER).crossed


def duality_check(config):
    """d=2 identity: open EDGE crossing along axis 0 iff no closed CORNER
    crossing along axis 1. Returns True when the configuration satisfies it."""
    mask = _as_mask(config)
    if mask.ndim != 2:
        raise ValueError("duality identity is two-dimensional")
    open_cross = crossing(mask, axis=0, adjacency=Adjacency.EDGE).crossed
    blocked = crossing(~mask, axis=1, adjacency=Adjacency.CORNER).crossed
    return open_cross == (not blocked)


def exact_crossing_counts(shape, adjacency=Adjacency.EDGE, axis=0):
    """Exhaustive crossing histogram: counts[n] = crossing configs with n open cells.

    Enumerates all 2**cells configurations; refuses boxes above
    ENUMERATION_CELL_CAP cells.
    """
    if shape.cells > ENUMERATION_CELL_CAP:
        raise EnumerationCapError(
            f"{shape.cells} cells exceeds the {ENUMERATION_CELL_CAP}-cell enumeration cap"
        )
    nbr = lat.neighbor_bitmasks(shape, adjacency)
    low = lat.face_bitmask(shape, axis, high=False)
    high = lat.face_bitmask(shape, axis, high=True)
    return crossing_counts(nbr, low, high, shape.cells)


def exact_crossing_prob(shape, p, adjacency=Adjacency.EDGE, axis=0, counts=None):
    """Exact crossing probability at density p via exhaustive enumeration."""
    if counts is None:
        counts = exact_crossing_counts(shape, adjacency, axis)
    return counts_to_prob(counts, p)


def counts_to_prob(counts, p):
    """Evaluate a crossing histogram as a probability: sum counts[n] p^n q^(C-n)."""
    c = np.asarray(counts, dtype=np.float64)
    n_cells = c.size - 1
    p = float(p)
    q = 1.0 - p
    total = 0.0
    for n in range(n_cells + 1):
        if c[n] != 0.0:
            total += c[n] * p**n * q ** (n_cells - n)
    return float(total)


def crossing_batch(masks, adjacency=Adjacency.EDGE, axis=0):
    """Crossing indicators for a stack of configurations in one label pass.

    ``masks`` has shape (trials, *sides). The stacking axis gets a
    structuring element of zeros so slices never connect; labels are then
    unique across slices and a label seen on both faces proves a crossing in
    its own slice.
    """
    masks = np.asarray(masks, dtype=bool)
    d = masks.ndim - 1
    inner = lat.ndimage_structure(d, adjacency)
    structure = np.zeros((3,) * (d + 1), dtype=bool)
    structure[1] = inner
    labels, _ = ndi.label(masks, structure=structure)
    low = np.take(labels, 0, axis=axis + 1).reshape(masks.shape[0], -1)
    high = np.take(labels, masks.shape[axis + 1] - 1, axis=axis + 1)
    high = high.reshape(masks.shape[0], -1)
    n_max = int(labels.max(initial=0))
    mark = np.zeros(n_max + 1, dtype=np.uint8)
    np.bitwise_or.at(mark, low.ravel(), 1)
    np.bitwise_or.at(mark, high.ravel(), 2)
    mark[0] = 0
    return (mark[low] == 3).any(axis=1)
