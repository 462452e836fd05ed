"""Backend selection for the hot split-scan kernel.

The compiled extension ``optsurv._scan`` is used when it was built; otherwise
the numpy implementation in ``optsurv._scan_py`` takes over. Both expose

``scan_thresholds(values, lam, dead, leaf_left, leaf_right,
tot_dead, tot_mass, tot_count, min_bucket) -> (best_gain, best_pos)``

Members arrive sorted by the split feature (``values`` ascending). Every member
starts in its right-subtree leaf ``leaf_right[i]``; the sweep moves members one
at a time into their left-subtree leaf ``leaf_left[i]``. ``tot_*`` hold the
starting per-leaf deaths, hazard mass and counts. After moving member ``i`` a
cut between ``values[i]`` and ``values[i+1]`` is a candidate when the two
values differ and no leaf holds fewer than ``min_bucket`` members. The
candidate maximising ``sum_l D_l log(D_l / M_l)`` wins (first one on ties);
``(-inf, -1)`` means nothing was feasible.
"""

from __future__ import annotations

import numpy as np

from . import _scan_py

try:
    from . import _scan as _compiled
except ImportError:  # extension not built
    _compiled = None

__all__ = ["scan_thresholds", "backend", "set_backend", "available_backends", "leaf_gain"]

leaf_gain = _scan_py.leaf_gain

_impl = _compiled if _compiled is not None else _scan_py


def available_backends() -> list[str]:
    return (["compiled"] if _compiled is not None else []) + ["python"]


def backend() -> str:
    return "compiled" if _impl is _compiled else "python"


def set_backend(name: str) -> None:
    """Switch kernels at runtime (``"compiled"`` or ``"python"``)."""
    global _impl
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        _impl = _compiled
    elif name == "python":
        _impl = _scan_py
    else:
        raise ValueError(f"unknown backend {name!r}")


def scan_thresholds(values, lam, dead, leaf_left, leaf_right,
                    tot_dead, tot_mass, tot_count, min_bucket):
    return _impl.scan_thresholds(
        np.ascontiguousarray(values, dtype=np.float64),
        np.ascontiguousarray(lam, dtype=np.float64),
        np.ascontiguousarray(dead, dtype=np.float64),
        np.ascontiguousarray(leaf_left, dtype=np.int_),
        np.ascontiguousarray(leaf_right, dtype=np.int_),
        np.ascontiguousarray(tot_dead, dtype=np.float64),
        np.ascontiguousarray(tot_mass, dtype=np.float64),
        np.ascontiguousarray(tot_count, dtype=np.float64),
        float(min_bucket),
    )
