"""Bitstring helpers for the occupation basis.

Basis states are integers; bit i is the occupation of mode i.  All helpers
are vectorized over arrays of basis indices.
"""

import numpy as np


def popcount(x):
    """Number of set bits, elementwise."""
    return np.bitwise_count(x)


def parity_below(indices, mode):
    """(-1)^(number of occupied modes with index < mode), elementwise.

    This is the fermionic sign picked up by a creation/annihilation
    operator at `mode` under the global mode order.
    """
    mask = (np.uint64(1) << np.uint64(mode)) - np.uint64(1)
    cnt = np.bitwise_count(indices & mask)
    return 1.0 - 2.0 * (cnt & 1)


def occupation_table(n_modes, spin_dim):
    """Per-site occupation counts for every basis string.

    Returns an array of shape (sites, 2**n_modes) of uint8 where entry
    [x, b] is the number of occupied modes at site x in string b.  Mode
    order is site-major: mode i belongs to site i // spin_dim.
    """
    sites = n_modes // spin_dim
    dim = 1 << n_modes
    idx = np.arange(dim, dtype=np.uint64)
    site_mask = np.uint64((1 << spin_dim) - 1)
    occ = np.empty((sites, dim), dtype=np.uint8)
    for x in range(sites):
        occ[x] = np.bitwise_count((idx >> np.uint64(x * spin_dim)) & site_mask)
    return occ


def pattern_ids(occ, base):
    """Encode per-site digit arrays as integers in the given base.

    occ has shape (sites, dim); digits must be < base.  Site 0 is the least
    significant digit.
    """
    sites = occ.shape[0]
    ids = np.zeros(occ.shape[1], dtype=np.int64)
    weight = 1
    for x in range(sites):
        ids += occ[x].astype(np.int64) * weight
        weight *= base
    return ids


def decode_pattern_id(pid, sites, base):
    """Inverse of pattern_ids for a single id: per-site digits."""
    digits = np.empty(sites, dtype=np.int64)
    for x in range(sites):
        digits[x] = pid % base
        pid //= base
    return digits
