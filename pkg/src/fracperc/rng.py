"""Counter-based randomness shared by every sampler in the package.

All random decisions are pure functions of a 64-bit key and a 64-bit counter,
computed with the splitmix64 finalizer. Keys form a small tree:

    master seed -> per-trial key -> per-level key (subdivision steps)
                                 -> site-state key (initial Bernoulli field)
                                 -> activation key (enhancement/diminishment)

A cell is retained (or a site is open, or an activation fires) exactly when
``bits(key, index) < threshold(p)`` with ``threshold(p) = floor(p * 2**64)``.
Comparing raw 64-bit hashes against an integer threshold makes the standard
monotone coupling exact: raising p can only turn cells on, never off, and the
same (seed, trial) pair sees identical hashes at every p and s.

The numba kernels in :mod:`fracperc._kernels` reimplement ``mix64`` and
``derive_key`` with the same constants; ``tests/test_rng.py`` pins the two
implementations to identical bits.
"""

from __future__ import annotations

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# Stream domains. Values are arbitrary but frozen: changing them changes
# every sampled realization.
DOMAIN_TRIAL = 0x11
DOMAIN_LEVEL = 0x22
DOMAIN_SITES = 0x33
DOMAIN_ACTIVATION = 0x44


def mix64(x):
    """splitmix64 finalizer, vectorized over uint64 arrays (or scalars)."""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = (x ^ (x >> np.uint64(30))) * np.uint64(_MIX1)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(_MIX2)
    return x ^ (x >> np.uint64(31))


def derive_key(key, domain, word=0):
    """Child key for a (domain, word) branch under ``key``.

    ``key`` and ``word`` may both be numpy arrays (broadcast together).
    Everything is uint64 with wrapping arithmetic.
    """
    key = np.asarray(key, dtype=np.uint64)
    dom = mix64(np.uint64((int(domain) * GOLDEN) & MASK64))
    w = np.asarray(word, dtype=np.uint64)
    with np.errstate(over="ignore"):
        arg = (key ^ dom) + (w + np.uint64(1)) * np.uint64(GOLDEN)
    return mix64(arg)


def trial_key(seed, trial):
    """Key of one Monte Carlo trial. ``trial`` may be an array."""
    return derive_key(np.uint64(int(seed) & MASK64), DOMAIN_TRIAL, trial)


def level_key(tkey, level):
    """Key of one subdivision level inside a trial."""
    return derive_key(tkey, DOMAIN_LEVEL, level)


def sites_key(tkey):
    """Key of the initial Bernoulli site field inside a trial."""
    return derive_key(tkey, DOMAIN_SITES, 0)


def activation_key(tkey):
    """Key of the enhancement/diminishment activation field inside a trial."""
    return derive_key(tkey, DOMAIN_ACTIVATION, 0)


def threshold(p):
    """Integer retention threshold for density ``p``.

    Returns ``(thresh, all_open)``; ``all_open`` short-circuits p >= 1 so a
    full density is exact rather than failing with probability 2**-64.
    """
    if p >= 1.0:
        return np.uint64(MASK64), True
    if p <= 0.0:
        return np.uint64(0), False
    return np.uint64(int(p * 2.0**64)), False


def cell_bits(key, idx):
    """Hash bits for cell counter(s) ``idx`` under ``key``.

    ``key`` and ``idx`` broadcast, so a (trials, 1) key column against a
    (cells,) counter row yields the whole batch in one shot.
    """
    key = np.asarray(key, dtype=np.uint64)
    idx = np.asarray(idx, dtype=np.uint64)
    with np.errstate(over="ignore"):
        arg = key + (idx + np.uint64(1)) * np.uint64(GOLDEN)
    return mix64(arg)


def bits_below(key, idx, thresh):
    """Boolean array: hash of each counter in ``idx`` falls below ``thresh``."""
    return cell_bits(key, idx) < np.uint64(thresh)


def fill_mask(key, n, thresh, out=None, chunk=1 << 22):
    """Open/retained mask for counters ``0..n-1``, computed in chunks.

    Chunking keeps the transient uint64 buffers small when n is large.
    """
    if out is None:
        out = np.empty(n, dtype=bool)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        idx = np.arange(start, stop, dtype=np.uint64)
        out[start:stop] = bits_below(key, idx, thresh)
    return out


def uniforms(key, idx):
    """float64 uniforms in [0, 1) for the given counters (53-bit mantissa)."""
    return (cell_bits(key, idx) >> np.uint64(11)).astype(np.float64) * 2.0**-53
