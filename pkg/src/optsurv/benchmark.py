"""Timing comparison of the compiled and numpy split-scan kernels."""

from __future__ import annotations

import time

import numpy as np

from . import kernels
from .search import TrainParams, train
from .survival_core import from_arrays, nelson_aalen


def _synthetic(n: int, rng):
    X = rng.uniform(size=(n, 4))
    hazard = np.where(X[:, 0] < 0.5, 0.5, 2.0) * np.where(X[:, 1] < 0.3, 1.0, 3.0)
    s = rng.exponential(1.0 / hazard)
    c = rng.exponential(1.5, size=n)
    return from_arrays(X, np.minimum(s, c), (s <= c).astype(np.int8))


def _scan_inputs(n: int, n_leaves: int, rng):
    values = np.sort(rng.uniform(size=n))
    lam = rng.exponential(size=n)
    dead = (rng.uniform(size=n) < 0.7).astype(np.float64)
    left = rng.integers(0, n_leaves // 2, size=n)
    right = rng.integers(n_leaves // 2, n_leaves, size=n)
    tot_dead = np.bincount(right, dead, minlength=n_leaves)
    tot_mass = np.bincount(right, lam, minlength=n_leaves)
    tot_count = np.bincount(right, minlength=n_leaves).astype(np.float64)
    return values, lam, dead, left, right, tot_dead, tot_mass, tot_count, 5


def _best_of(fn, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_benchmark(n: int = 2000, repeats: int = 5, seed: int = 0, max_depth: int = 4) -> dict:
    """Best-of-``repeats`` wall time per backend for one kernel call and one
    full training run. Results must agree across backends."""
    rng = np.random.default_rng(seed)
    args = _scan_inputs(n, 8, rng)
    data = _synthetic(n, rng)
    params = TrainParams(max_depth=max_depth, restarts=3, alpha=1.0, seed=seed)
    previous = kernels.backend()
    out = {"n": n, "repeats": repeats, "backends": {}}
    answers = {}
    try:
        for name in kernels.available_backends():
            kernels.set_backend(name)
            scan_s = _best_of(lambda: kernels.scan_thresholds(*args), repeats)
            tree_holder = []
            train_s = _best_of(lambda: tree_holder.append(train(data, params)[0]), max(1, repeats // 2))
            answers[name] = (kernels.scan_thresholds(*args), tree_holder[-1].structure())
            out["backends"][name] = {"scan_seconds": scan_s, "train_seconds": train_s}
    finally:
        kernels.set_backend(previous)
    results = list(answers.values())
    out["backends_agree"] = all(
        r[1] == results[0][1] and abs(r[0][0] - results[0][0][0]) <= 1e-9 * max(1.0, abs(results[0][0][0]))
        and r[0][1] == results[0][0][1]
        for r in results
    )
    b = out["backends"]
    if "compiled" in b:
        out["speedup_scan"] = b["python"]["scan_seconds"] / b["compiled"]["scan_seconds"]
        out["speedup_train"] = b["python"]["train_seconds"] / b["compiled"]["train_seconds"]
    return out
