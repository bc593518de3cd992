"""Neighborhood definitions and the bitmask helpers built on them."""
import numpy as np
import pytest

from fracperc.lattice import (
    Adjacency,
    BoxShape,
    face_bitmask,
    face_cells,
    ndimage_structure,
    neighbor_bitmasks,
    neighbors,
    offsets,
)


def offset_tuples(d, adj):
    return [tuple(int(c) for c in row) for row in offsets(d, adj)]


@pytest.mark.parametrize(
    "d,adj,count",
    [
        (2, Adjacency.EDGE, 4),
        (2, Adjacency.CORNER, 8),
        (3, Adjacency.EDGE, 18),
        (3, Adjacency.CORNER, 26),
        (4, Adjacency.EDGE, 64),
        (4, Adjacency.CORNER, 80),
    ],
)
def test_offset_counts(d, adj, count):
    offs = offset_tuples(d, adj)
    assert len(offs) == count
    assert len(set(offs)) == count
    assert all(len(o) == d for o in offs)


def test_edge_offsets_share_a_coordinate():
    # the restricted adjacency forbids steps that change every coordinate
    for d in (2, 3, 4):
        for o in offset_tuples(d, Adjacency.EDGE):
            assert max(abs(c) for c in o) == 1
            assert any(c == 0 for c in o)
    for o in offset_tuples(2, Adjacency.EDGE):
        assert sum(abs(c) for c in o) == 1  # d=2: plain square lattice


def test_edge_subset_of_corner():
    for d in (2, 3):
        assert set(offset_tuples(d, Adjacency.EDGE)) <= set(offset_tuples(d, Adjacency.CORNER))


def test_offsets_sorted_and_symmetric():
    for d in (2, 3):
        for adj in Adjacency:
            offs = offset_tuples(d, adj)
            assert offs == sorted(offs)
            negated = {tuple(-c for c in o) for o in offs}
            assert negated == set(offs)


def test_neighbors_clipped_at_corner():
    shape = BoxShape((3, 3))
    got = neighbors((0, 0), shape, Adjacency.EDGE)
    assert sorted(got) == [(0, 1), (1, 0)]
    got = neighbors((0, 0), shape, Adjacency.CORNER)
    assert sorted(got) == [(0, 1), (1, 0), (1, 1)]


def test_face_cells_counts_and_membership():
    shape = BoxShape((3, 4))
    low = face_cells(shape, axis=0, high=False)
    high = face_cells(shape, axis=0, high=True)
    assert len(low) == 4 and len(high) == 4
    assert all(c[0] == 0 for c in low)
    assert all(c[0] == 2 for c in high)
    cube = BoxShape.cube(3, 3)
    assert len(face_cells(cube, axis=2, high=False)) == 9


def test_ndimage_structure_matches_offsets():
    for d in (2, 3):
        for adj in Adjacency:
            st = ndimage_structure(d, adj)
            assert st.shape == (3,) * d
            center = (1,) * d
            assert st[center]
            hits = {
                tuple(int(i) - 1 for i in idx)
                for idx in zip(*np.nonzero(st))
                if tuple(idx) != center
            }
            assert hits == set(offset_tuples(d, adj))


def test_neighbor_bitmasks_match_neighbor_lists():
    shape = BoxShape((3, 3))
    masks = neighbor_bitmasks(shape, Adjacency.CORNER)
    assert masks.shape == (9,)
    for flat in range(9):
        cell = np.unravel_index(flat, shape.sides)
        expect = 0
        for nb in neighbors(tuple(int(c) for c in cell), shape, Adjacency.CORNER):
            expect |= 1 << int(np.ravel_multi_index(nb, shape.sides))
        assert int(masks[flat]) == expect


def test_face_bitmask_bits():
    shape = BoxShape((2, 3))
    low = int(face_bitmask(shape, axis=0, high=False))
    high = int(face_bitmask(shape, axis=0, high=True))
    assert low == 0b000111  # row 0 in row-major order
    assert high == 0b111000
    assert low & high == 0


def test_boxshape_validation():
    with pytest.raises(ValueError):
        BoxShape((0, 3))
    with pytest.raises(ValueError):
        BoxShape(())
    assert BoxShape.cube(4, 2).cells == 16
    assert BoxShape((2, 3, 4)).d == 3
