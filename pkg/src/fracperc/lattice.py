"""Finite boxes and the two adjacency systems used by every experiment.

Cells are d-dimensional integer coordinates, 0-based, inside an axis-aligned
box. Two cells are neighbors under

* ``Adjacency.EDGE``   when every coordinate differs by at most 1 and at
  least one coordinate is equal, so their closed unit cubes share at least
  an edge (d=2: the 4 square-lattice neighbors; d=3: 18 neighbors);
* ``Adjacency.CORNER`` when every coordinate differs by at most 1, so the
  cubes share at least a corner (d=2: 8 neighbors; d=3: 26 neighbors).

Every EDGE neighbor is also a CORNER neighbor. Crossings of open cells are
detected under EDGE; blocking paths of closed cells under CORNER; the two are
dual in d=2 (see :func:`fracperc.core.duality_check`).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum

import numpy as np


class Adjacency(Enum):
    """Neighborhood system: cubes sharing at least an edge, or a corner."""

    EDGE = "edge"
    CORNER = "corner"


@dataclass(frozen=True)
class BoxShape:
    """Axis lengths of a finite box of cells; d = len(sides) >= 2."""

    sides: tuple[int, ...]

    def __post_init__(self):
        if len(self.sides) < 2:
            raise ValueError("boxes are at least 2-dimensional")
        if any(int(s) < 1 for s in self.sides):
            raise ValueError(f"axis lengths must be >= 1, got {self.sides}")
        object.__setattr__(self, "sides", tuple(int(s) for s in self.sides))

    @classmethod
    def cube(cls, side, d):
        return cls((int(side),) * int(d))

    @property
    def d(self):
        return len(self.sides)

    @property
    def cells(self):
        n = 1
        for s in self.sides:
            n *= s
        return n

    def contains(self, cell):
        return len(cell) == self.d and all(
            0 <= c < s for c, s in zip(cell, self.sides)
        )


def offsets(d, adjacency):
    """All neighbor offsets for dimension d, sorted lexicographically.

    Returns an (n_offsets, d) int array. The lexicographic order (with
    -1 < 0 < 1 per coordinate) is part of the contract: every neighbor
    enumeration in the package walks offsets in this order.
    """
    d = int(d)
    out = []
    for off in itertools.product((-1, 0, 1), repeat=d):
        if all(o == 0 for o in off):
            continue
        if adjacency is Adjacency.EDGE and not any(o == 0 for o in off):
            continue
        out.append(off)
    return np.array(out, dtype=np.int64)


def neighbors(cell, shape, adjacency):
    """In-box neighbors of ``cell``, in the fixed offset order."""
    cell = tuple(int(c) for c in cell)
    if not shape.contains(cell):
        raise ValueError(f"cell {cell} outside box {shape.sides}")
    result = []
    for off in offsets(shape.d, adjacency):
        nb = tuple(c + int(o) for c, o in zip(cell, off))
        if shape.contains(nb):
            result.append(nb)
    return result


def face_cells(shape, axis, high):
    """Coordinates of the low (``high=False``) or high face along ``axis``.

    Returns an (n, d) int array in C order of the remaining axes.
    """
    axis = int(axis)
    if not 0 <= axis < shape.d:
        raise ValueError(f"axis {axis} out of range for d={shape.d}")
    fixed = shape.sides[axis] - 1 if high else 0
    ranges = [
        [fixed] if ax == axis else range(shape.sides[ax])
        for ax in range(shape.d)
    ]
    return np.array(list(itertools.product(*ranges)), dtype=np.int64)


def ndimage_structure(d, adjacency):
    """Structuring element for scipy.ndimage.label matching ``adjacency``."""
    import scipy.ndimage as ndi

    rank = int(d)
    conn = rank if adjacency is Adjacency.CORNER else rank - 1
    return ndi.generate_binary_structure(rank, conn)


def neighbor_bitmasks(shape, adjacency):
    """Per-cell neighbor sets as bitmasks over row-major cell indices.

    Only valid for boxes with at most 63 cells; used by the exhaustive
    enumeration oracle.
    """
    if shape.cells > 63:
        raise ValueError("bitmask form limited to 63 cells")
    sides = shape.sides
    offs = offsets(shape.d, adjacency)
    masks = np.zeros(shape.cells, dtype=np.int64)
    for idx, cell in enumerate(itertools.product(*map(range, sides))):
        m = 0
        for off in offs:
            nb = tuple(c + int(o) for c, o in zip(cell, off))
            if shape.contains(nb):
                j = 0
                for c, s in zip(nb, sides):
                    j = j * s + c
                m |= 1 << j
        masks[idx] = m
    return masks


def face_bitmask(shape, axis, high):
    """Bitmask over row-major cell indices of one face (<= 63 cells)."""
    if shape.cells > 63:
        raise ValueError("bitmask form limited to 63 cells")
    m = 0
    for cell in face_cells(shape, axis, high):
        j = 0
        for c, s in zip(cell, shape.sides):
            j = j * s + int(c)
        m |= 1 << j
    return m
