"""Vectorised numpy implementation of the threshold scan (fallback backend).

Mirrors ``_scan.pyx``; see :func:`optsurv.kernels.scan_thresholds` for the
contract.
"""

import numpy as np


def leaf_gain(D, M):
    """Elementwise ``D * log(D / M)`` with the ``0 log 0 = 0`` convention."""
    D = np.asarray(D, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    out = np.zeros(np.broadcast(D, M).shape)
    pos = D > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        np.copyto(out, D * np.log(D / M), where=pos)
    return out


def scan_thresholds(values, lam, dead, leaf_left, leaf_right,
                    tot_dead, tot_mass, tot_count, min_bucket):
    m = values.shape[0]
    n_leaves = tot_dead.shape[0]
    if m < 2:
        return -np.inf, -1
    rows = np.arange(m)
    moved = np.zeros((3, m, n_leaves))
    moved[0, rows, leaf_left] += dead
    moved[1, rows, leaf_left] += lam
    moved[2, rows, leaf_left] += 1.0
    out = np.zeros((3, m, n_leaves))
    out[0, rows, leaf_right] += dead
    out[1, rows, leaf_right] += lam
    out[2, rows, leaf_right] += 1.0
    np.cumsum(moved, axis=1, out=moved)
    np.cumsum(out, axis=1, out=out)
    D = tot_dead[None, :] + moved[0] - out[0]
    M = tot_mass[None, :] + moved[1] - out[1]
    C = tot_count[None, :] + moved[2] - out[2]
    F = leaf_gain(D, M).sum(axis=1)
    ok = np.all(C >= min_bucket, axis=1)
    ok[:-1] &= values[:-1] < values[1:]
    ok[-1] = False
    if not ok.any():
        return -np.inf, -1
    Fm = np.where(ok, F, -np.inf)
    pos = int(np.argmax(Fm))
    return float(Fm[pos]), pos
