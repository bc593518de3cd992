"""numba kernels: exhaustive enumeration and large-grid crossing sweeps.

Three independent connectivity engines exist in this package: the dense
scipy.ndimage route (:mod:`fracperc.core`), the bitboard flood fill here
(exhaustive oracle), and the run-based row sweep here (large d=2 grids).
They are cross-checked against each other in the test suite.

Hash math is uint64-only throughout; mixing uint64 with signed ints would
silently promote to float64 under numpy rules, so indices are cast
explicitly where they enter hash expressions.
"""

from __future__ import annotations

import numpy as np
from numba import njit

U1 = np.uint64(1)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

_POP16 = np.array([bin(i).count("1") for i in range(1 << 16)], dtype=np.uint8)


@njit(cache=True, inline="always")
def _mix64(x):
    x = (x ^ (x >> np.uint64(30))) * _MIX1
    x = (x ^ (x >> np.uint64(27))) * _MIX2
    return x ^ (x >> np.uint64(31))


@njit(cache=True, inline="always")
def _cell_bits(key, idx):
    return _mix64(key + (idx + U1) * _GOLDEN)


@njit(cache=True)
def derive_key_nb(key, domain, word):
    dom = _mix64(np.uint64(domain) * _GOLDEN)
    return _mix64((key ^ dom) + (np.uint64(word) + U1) * _GOLDEN)


@njit(cache=True)
def cell_bits_array(key, idx):
    out = np.empty(idx.size, np.uint64)
    for i in range(idx.size):
        out[i] = _cell_bits(key, idx[i])
    return out


@njit(cache=True, inline="always")
def _pop64(x):
    return (
        _POP16[x & np.uint64(0xFFFF)]
        + _POP16[(x >> np.uint64(16)) & np.uint64(0xFFFF)]
        + _POP16[(x >> np.uint64(32)) & np.uint64(0xFFFF)]
        + _POP16[(x >> np.uint64(48)) & np.uint64(0xFFFF)]
    )


@njit(cache=True)
def config_crosses(nbr, low, high, cfg):
    """Flood fill over set bits of cfg from the low face to the high face."""
    seeds = cfg & low
    if seeds == 0 or cfg & high == 0:
        return False
    if seeds & high != 0:
        return True
    visited = seeds
    stack = np.empty(64, np.int64)
    top = 0
    s = seeds
    while s != 0:
        lsb = s & -s
        stack[top] = _pop64(np.uint64(lsb - 1))
        top += 1
        s ^= lsb
    while top > 0:
        top -= 1
        i = stack[top]
        fresh = nbr[i] & cfg & ~visited
        if fresh == 0:
            continue
        visited |= fresh
        if visited & high != 0:
            return True
        while fresh != 0:
            lsb = fresh & -fresh
            stack[top] = _pop64(np.uint64(lsb - 1))
            top += 1
            fresh ^= lsb
    return False


@njit(cache=True)
def crossing_counts(nbr, low, high, n_cells):
    """Histogram over open-cell counts of configurations that cross.

    Enumerates all 2**n_cells subsets; counts[n] is the number of crossing
    configurations with exactly n open cells.
    """
    counts = np.zeros(n_cells + 1, np.int64)
    for cfg in range(1 << n_cells):
        if config_crosses(nbr, low, high, cfg):
            counts[_pop64(np.uint64(cfg))] += 1
    return counts


@njit(cache=True)
def rectangle_event_counts(nbr, low, high, third_cross, m, n_cells):
    """Histogram for the three-crossing rectangle event on a 3m x m box.

    Cells are row-major with the long axis first, so the left third is the
    low m*m bits and the right third the top m*m bits. ``third_cross`` is a
    truth table over the 2**(m*m) local patterns: short-axis crossing of an
    m x m block.
    """
    mm = m * m
    lmask = (1 << mm) - 1
    counts = np.zeros(n_cells + 1, np.int64)
    for cfg in range(1 << n_cells):
        if third_cross[cfg & lmask] == 0:
            continue
        if third_cross[(cfg >> (2 * mm)) & lmask] == 0:
            continue
        if config_crosses(nbr, low, high, cfg):
            counts[_pop64(np.uint64(cfg))] += 1
    return counts


@njit(cache=True, inline="always")
def _find(parent, a):
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


@njit(cache=True)
def sweep_trials(n_sub, level, level_keys, thresh, all_open):
    """Axis-0 crossing indicators of level-``level`` retained sets, d=2.

    Edge adjacency (4-connectivity). One row of the side N**level grid is
    processed at a time: open cells are grouped into runs, runs are merged
    with the previous row's runs by column overlap, and a disjoint-set forest
    over run labels tracks which clusters still touch the low face. Rows of
    the coarser levels are cached and refreshed when the ancestor row index
    changes, so discarded coarse blocks are skipped without hashing their
    descendants. Trials whose live clusters all lose contact with the low
    face exit early.

    level_keys[t, j] holds the level-(j+1) stream key of trial t (only the
    first ``level`` columns are read). Returns one uint8 per trial.
    """
    n_trials = level_keys.shape[0]
    out = np.zeros(n_trials, np.uint8)

    side = np.int64(1)
    for _ in range(level):
        side *= n_sub

    # flat cache of ancestor-row masks for levels 1..level-1
    n_cache = level - 1
    cache_off = np.empty(max(n_cache, 1), np.int64)
    row_len = np.empty(max(n_cache, 1), np.int64)
    cache_len = np.int64(0)
    ln = np.int64(1)
    for j in range(n_cache):
        ln *= n_sub
        cache_off[j] = cache_len
        row_len[j] = ln
        cache_len += ln
    cache = np.zeros(max(cache_len, 1), np.uint8)
    cached_row = np.full(max(n_cache, 1), -1, np.int64)

    # pow_down[j] = N**(level-1-j): ancestor row of level j+1 is r // pow_down[j]
    pow_down = np.empty(level, np.int64)
    p = np.int64(1)
    for j in range(level - 1, -1, -1):
        pow_down[j] = p
        p *= n_sub

    max_runs = side // 2 + 2
    cur_s = np.empty(max_runs, np.int64)
    cur_e = np.empty(max_runs, np.int64)
    cur_l = np.empty(max_runs, np.int64)
    prev_s = np.empty(max_runs, np.int64)
    prev_e = np.empty(max_runs, np.int64)
    prev_l = np.empty(max_runs, np.int64)
    cap = 2 * max_runs + 4
    parent = np.empty(cap, np.int64)
    low = np.zeros(cap, np.uint8)
    remap = np.empty(cap, np.int64)
    stamp = np.zeros(cap, np.int64)
    old_roots = np.empty(max_runs, np.int64)
    new_low = np.empty(max_runs, np.uint8)

    blocks = side // n_sub if level > 1 else np.int64(1)
    blk_len = n_sub if level > 1 else side

    for t in range(n_trials):
        key_top = level_keys[t, level - 1]
        for j in range(n_cache):
            cached_row[j] = -1
        n_prev = np.int64(0)
        cursor = np.int64(0)
        alive = True
        any_low = False

        for r in range(side):
            for j in range(n_cache):
                a = r // pow_down[j]
                if a == cached_row[j]:
                    continue
                cached_row[j] = a
                rl = row_len[j]
                off = cache_off[j]
                kj = level_keys[t, j]
                base_j = np.uint64(a) * np.uint64(rl)
                if j == 0:
                    for y in range(rl):
                        ok = all_open or _cell_bits(kj, base_j + np.uint64(y)) < thresh
                        cache[off + y] = 1 if ok else 0
                else:
                    off_par = cache_off[j - 1]
                    for y in range(rl):
                        if cache[off_par + y // n_sub] == 0:
                            cache[off + y] = 0
                        else:
                            ok = all_open or _cell_bits(kj, base_j + np.uint64(y)) < thresh
                            cache[off + y] = 1 if ok else 0

            # collect runs of open cells in this row
            n_cur = np.int64(0)
            in_run = False
            base = np.uint64(r) * np.uint64(side)
            off_top = cache_off[n_cache - 1] if n_cache > 0 else np.int64(0)
            for blk in range(blocks):
                if level > 1 and cache[off_top + blk] == 0:
                    in_run = False
                    continue
                y0 = blk * blk_len
                for y in range(y0, y0 + blk_len):
                    if all_open or _cell_bits(key_top, base + np.uint64(y)) < thresh:
                        if not in_run:
                            cur_s[n_cur] = y
                            n_cur += 1
                            in_run = True
                        cur_e[n_cur - 1] = y + 1
                    else:
                        in_run = False

            if n_cur == 0:
                alive = False
                break

            # merge with previous row's runs on column overlap
            j0 = np.int64(0)
            for i in range(n_cur):
                s0 = cur_s[i]
                e0 = cur_e[i]
                while j0 < n_prev and prev_e[j0] <= s0:
                    j0 += 1
                root = np.int64(-1)
                jj = j0
                while jj < n_prev and prev_s[jj] < e0:
                    if prev_e[jj] > s0:
                        r2 = _find(parent, prev_l[jj])
                        if root < 0:
                            root = r2
                        elif r2 != root:
                            parent[r2] = root
                            low[root] |= low[r2]
                    jj += 1
                if root < 0:
                    root = cursor
                    parent[root] = root
                    low[root] = 1 if r == 0 else 0
                    cursor += 1
                cur_l[i] = root

            # compact live labels to [0, n_live); stage flags first because
            # new ids may collide with still-unread old root slots
            epoch = np.int64(t) * np.int64(side) + np.int64(r) + 1
            new_n = np.int64(0)
            for i in range(n_cur):
                rt = _find(parent, cur_l[i])
                if stamp[rt] != epoch:
                    stamp[rt] = epoch
                    remap[rt] = new_n
                    old_roots[new_n] = rt
                    new_n += 1
                cur_l[i] = remap[rt]
            any_low = False
            for i in range(new_n):
                new_low[i] = low[old_roots[i]]
                if new_low[i] != 0:
                    any_low = True
            if not any_low:
                alive = False
                break
            for i in range(new_n):
                parent[i] = i
                low[i] = new_low[i]
            cursor = new_n

            n_prev = n_cur
            tmp = prev_s; prev_s = cur_s; cur_s = tmp
            tmp = prev_e; prev_e = cur_e; cur_e = tmp
            tmp = prev_l; prev_l = cur_l; cur_l = tmp

        out[t] = 1 if alive and any_low else 0
    return out
