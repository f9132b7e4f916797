"""Pure numpy versions of the compiled kernels in ``_ckernels``."""
from __future__ import annotations

import numpy as np


def hopping_coo(states, create, annihilate, amps):
    """COO triplets of sum_k amps[k] c^dag_{create[k]} c_{annihilate[k]} (create != annihilate)."""
    states = np.asarray(states, dtype=np.int64)
    rows, cols, vals = [], [], []
    for p, q, t in zip(np.asarray(create), np.asarray(annihilate), np.asarray(amps)):
        p, q = int(p), int(q)
        lo, hi = min(p, q), max(p, q)
        between = np.int64((1 << hi) - (1 << (lo + 1)))
        col = np.flatnonzero(((states >> q) & 1).astype(bool) & ~((states >> p) & 1).astype(bool))
        s = states[col]
        row = lookup(states, s ^ np.int64((1 << q) | (1 << p)))
        keep = row >= 0
        col, row, s = col[keep], row[keep], s[keep]
        sign = 1.0 - 2.0 * (np.bitwise_count(s & between) & 1)
        rows.append(row)
        cols.append(col)
        vals.append(t * sign)
    if not rows:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty.copy(), np.empty(0)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def lookup(states, keys):
    """Positions of ``keys`` in the sorted ``states``; -1 where absent."""
    states = np.asarray(states)
    keys = np.asarray(keys, dtype=np.int64)
    if states.size == 0:
        return np.full(keys.shape, -1, dtype=np.int64)
    pos = np.searchsorted(states, keys)
    pos_c = np.minimum(pos, states.size - 1)
    return np.where(states[pos_c] == keys, pos_c, -1).astype(np.int64)


def csr_matvec(indptr, indices, data, x, out):
    """out = A @ x for real CSR ``A`` and complex ``x``."""
    prod = data * x[indices]
    out[:] = np.add.reduceat(prod, indptr[:-1]) if prod.size else 0.0
    # reduceat returns the element itself for empty rows; zero them
    empty = indptr[1:] == indptr[:-1]
    if empty.any():
        out[empty] = 0.0
    return out
