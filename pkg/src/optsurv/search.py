"""Tree training: greedy growth, coordinate-descent local search, restarts,
cross-validation and automatic complexity calibration.

The training objective is ``tree_error + alpha * n_splits``. With the baseline
frozen, a leaf's error is ``S_k - D_k log(D_k / M_k)`` where ``S_k`` sums the
tree-independent saturated terms, ``D_k`` counts deaths and ``M_k`` sums the
baseline hazard of its members. The search therefore maximises the subtree
value ``V = sum_leaves D log(D / M) - alpha * n_splits`` and reports
``objective = S - V(root)``.

Local search visits the nodes of the current tree in random order and tries,
in this order, the first strictly improving (by more than ``1e-10``) of

* delete: collapse an internal node into a leaf;
* replace: re-optimise an internal node's split keeping both subtrees;
* create: split a leaf into two leaves.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace as dc_replace
from typing import Optional, Sequence, Union

import numpy as np

from . import kernels
from .survival_core import DataError, Dataset, nelson_aalen
from .tree_model import (
    ModelError,
    Split,
    SplitRule,
    Structure,
    SurvivalTree,
    build_tree,
)

__all__ = [
    "TrainParams",
    "SearchTrace",
    "best_split",
    "greedy_grow",
    "random_start_tree",
    "local_search",
    "train",
    "alpha_grid",
    "holdout_error",
    "calibrate_alpha",
    "cross_validate",
    "fold_indices",
]

TOL = 1e-10
MAX_SUBSET_LEVELS = 10
HOLDOUT_FLOOR = 1e-8


@dataclass
class TrainParams:
    max_depth: int = 3
    min_bucket: int = 5
    restarts: int = 10
    alpha: Union[float, str] = "auto"
    seed: int = 0
    max_sweeps: int = 100
    folds: int = 5

    def validate(self) -> "TrainParams":
        if int(self.max_depth) < 1:
            raise ValueError("max_depth must be >= 1")
        if int(self.min_bucket) < 1:
            raise ValueError("min_bucket must be >= 1")
        if int(self.restarts) < 1:
            raise ValueError("restarts must be >= 1")
        if int(self.max_sweeps) < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.alpha != "auto":
            a = float(self.alpha)
            if not np.isfinite(a) or a < 0:
                raise ValueError("invalid complexity parameter")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "TrainParams":
        known = {f: d[f] for f in cls.__dataclass_fields__ if f in d}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown training parameters: {sorted(unknown)}")
        if "alpha" in known and known["alpha"] != "auto":
            known["alpha"] = float(known["alpha"])
        return cls(**known).validate()

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SearchTrace:
    """Objective after every sweep plus the log of accepted moves."""

    initial_objective: float
    objectives: list = field(default_factory=list)
    moves: list = field(default_factory=list)  # (node uid, kind, delta objective)
    restart: int = 0

    @property
    def sweeps(self) -> int:
        return len(self.objectives)

    def to_csv(self) -> str:
        lines = ["sweep,objective", f"0,{self.initial_objective!r}"]
        lines += [f"{i},{v!r}" for i, v in enumerate(self.objectives, start=1)]
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# working representation


def _gain(D: float, M: float) -> float:
    return D * math.log(D / M) if D > 0 else 0.0


class _Problem:
    """Training data prepared for repeated split evaluation."""

    def __init__(self, data: Dataset, baseline, min_bucket: int):
        self.data = data
        self.X = np.ascontiguousarray(data.X, dtype=np.float64)
        self.n, self.p = self.X.shape
        self.baseline = baseline
        self.lam = np.ascontiguousarray(baseline(data.time), dtype=np.float64).reshape(-1)
        self.dead = data.event.astype(np.float64)
        self.min_bucket = int(min_bucket)
        died = self.dead > 0
        if np.any(self.lam[died] <= 0):
            raise ModelError("baseline mismatch: a death has zero cumulative hazard")
        self.sat = float(np.sum(np.log(1.0 / self.lam[died])))
        self.subset_feature = [f.uses_subsets for f in data.features]


class _Node:
    __slots__ = ("uid", "idx", "depth", "rule", "left", "right", "D", "M", "alive")

    def __init__(self, uid, depth):
        self.uid = uid
        self.depth = depth
        self.idx = None
        self.rule = None
        self.left = None
        self.right = None
        self.D = 0.0
        self.M = 0.0
        self.alive = True

    @property
    def is_leaf(self):
        return self.rule is None


class _Builder:
    def __init__(self, prob: _Problem):
        self.prob = prob
        self.next_uid = 0

    def node(self, depth) -> _Node:
        nd = _Node(self.next_uid, depth)
        self.next_uid += 1
        return nd

    def set_members(self, nd: _Node, idx: np.ndarray) -> None:
        """Assign members to ``nd`` and route them through its subtree."""
        p = self.prob
        nd.idx = idx
        nd.D = float(p.dead[idx].sum())
        nd.M = float(p.lam[idx].sum())
        if nd.rule is not None:
            left = nd.rule.goes_left(p.X[idx, nd.rule.feature])
            self.set_members(nd.left, idx[left])
            self.set_members(nd.right, idx[~left])

    def from_structure(self, struct: Structure, depth: int = 1) -> _Node:
        nd = self.node(depth)
        if struct is not None:
            nd.rule = struct.rule
            nd.left = self.from_structure(struct.left, depth + 1)
            nd.right = self.from_structure(struct.right, depth + 1)
        return nd

    def split(self, nd: _Node, rule: SplitRule) -> None:
        nd.rule = rule
        nd.left = self.node(nd.depth + 1)
        nd.right = self.node(nd.depth + 1)
        self.set_members(nd, nd.idx)


def _to_structure(nd: _Node) -> Structure:
    if nd.is_leaf:
        return None
    return Split(nd.rule, _to_structure(nd.left), _to_structure(nd.right))


def _value(nd: _Node, alpha: float) -> float:
    if nd.is_leaf:
        return _gain(nd.D, nd.M)
    return _value(nd.left, alpha) + _value(nd.right, alpha) - alpha


def _walk(nd: _Node):
    yield nd
    if not nd.is_leaf:
        yield from _walk(nd.left)
        yield from _walk(nd.right)


def _leaf_list(nd: _Node) -> list:
    return [x for x in _walk(nd) if x.is_leaf]


def _kill(nd: _Node) -> None:
    for x in _walk(nd):
        x.alive = False


def _collapse(nd: _Node) -> None:
    _kill(nd.left)
    _kill(nd.right)
    nd.rule = nd.left = nd.right = None


def _local_leaves(prob: _Problem, sub: Optional[_Node], idx: np.ndarray):
    """Leaf position (preorder among ``sub``'s leaves) for members ``idx``."""
    if sub is None or sub.is_leaf:
        return np.zeros(idx.size, dtype=np.int_), 1
    out = np.empty(idx.size, dtype=np.int_)
    count = [0]

    def walk(nd, pos):
        if nd.is_leaf:
            out[pos] = count[0]
            count[0] += 1
            return
        left = nd.rule.goes_left(prob.X[idx[pos], nd.rule.feature])
        walk(nd.left, pos[left])
        walk(nd.right, pos[~left])

    walk(sub, np.arange(idx.size))
    return out, count[0]


# --------------------------------------------------------------------------
# split search


def _subset_masks(n_levels: int, symmetric: bool, theta_order=None) -> np.ndarray:
    if n_levels <= MAX_SUBSET_LEVELS:
        top = 2 ** (n_levels - 1) if symmetric else 2 ** n_levels - 1
        codes = np.arange(1, top)
        return ((codes[:, None] >> np.arange(n_levels)) & 1).astype(bool)
    # too many levels: threshold splits on the levels ordered by hazard
    masks = np.zeros((n_levels - 1, n_levels), dtype=bool)
    for k in range(1, n_levels):
        masks[k - 1, theta_order[:k]] = True
    if not symmetric:
        masks = np.vstack([masks, ~masks])
    return masks


def _best_subset(prob, j, idx, x, leaf_l, leaf_r, n_leaves, symmetric):
    levels, pos = np.unique(x, return_inverse=True)
    nlev = levels.size
    if nlev < 2:
        return -math.inf, None
    dead = prob.dead[idx]
    lam = prob.lam[idx]
    stats = {}
    for side, leaf in (("l", leaf_l), ("r", leaf_r)):
        for name, w in (("D", dead), ("M", lam), ("C", np.ones_like(lam))):
            a = np.zeros((nlev, n_leaves))
            np.add.at(a, (pos, leaf), w)
            stats[side + name] = a
    order = None
    if nlev > MAX_SUBSET_LEVELS:
        d_lev = np.bincount(pos, dead, nlev)
        m_lev = np.bincount(pos, lam, nlev)
        order = np.argsort(d_lev / np.maximum(m_lev, 1e-300), kind="stable")
    masks = _subset_masks(nlev, symmetric, order)
    S = masks.astype(np.float64)
    T = 1.0 - S
    D = S @ stats["lD"] + T @ stats["rD"]
    M = S @ stats["lM"] + T @ stats["rM"]
    C = S @ stats["lC"] + T @ stats["rC"]
    ok = np.all(C >= prob.min_bucket, axis=1)
    if not ok.any():
        return -math.inf, None
    F = np.where(ok, kernels.leaf_gain(D, M).sum(axis=1), -np.inf)
    k = int(np.argmax(F))
    rule = SplitRule(j, levels=frozenset(int(v) for v in levels[masks[k]]))
    return float(F[k]), rule


def _best_rule(prob: _Problem, idx: np.ndarray, left_sub, right_sub, features=None):
    """Best split of members ``idx`` with the given subtrees hung below it.

    Returns ``(sum of leaf gains, rule)`` or ``(-inf, None)``.
    """
    if idx.size < 2 * prob.min_bucket:
        return -math.inf, None
    leaf_l, n_l = _local_leaves(prob, left_sub, idx)
    leaf_r, n_r = _local_leaves(prob, right_sub, idx)
    leaf_r = leaf_r + n_l
    n_leaves = n_l + n_r
    dead = prob.dead[idx]
    lam = prob.lam[idx]
    tot_dead = np.bincount(leaf_r, dead, n_leaves)
    tot_mass = np.bincount(leaf_r, lam, n_leaves)
    tot_count = np.bincount(leaf_r, None, n_leaves).astype(np.float64)
    symmetric = (left_sub is None or left_sub.is_leaf) and (right_sub is None or right_sub.is_leaf)
    best_g, best_rule = -math.inf, None
    for j in range(prob.p) if features is None else features:
        x = prob.X[idx, j]
        if prob.subset_feature[j]:
            g, rule = _best_subset(prob, j, idx, x, leaf_l, leaf_r, n_leaves, symmetric)
        else:
            order = np.argsort(x, kind="stable")
            xs = x[order]
            if xs[0] == xs[-1]:
                continue
            g, pos = kernels.scan_thresholds(
                xs, lam[order], dead[order], leaf_l[order], leaf_r[order],
                tot_dead, tot_mass, tot_count, prob.min_bucket,
            )
            rule = None
            if pos >= 0:
                thr = 0.5 * (xs[pos] + xs[pos + 1])
                if not xs[pos] <= thr < xs[pos + 1]:
                    thr = xs[pos]
                rule = SplitRule(j, threshold=thr)
        if rule is not None and g > best_g:
            best_g, best_rule = g, rule
    return best_g, best_rule


def best_split(members, data: Dataset, min_bucket: int, baseline=None):
    """Best two-leaf split of the rows ``members`` of ``data``.

    Returns ``(SplitRule, error reduction)`` or ``None`` when no feasible split
    reduces the leaf error. ``baseline`` defaults to the Nelson-Aalen estimate
    of ``data``.
    """
    if baseline is None:
        baseline = nelson_aalen(data.time, data.event)
    prob = _Problem(data, baseline, min_bucket)
    idx = np.sort(np.asarray(members, dtype=np.int64))
    g, rule = _best_rule(prob, idx, None, None)
    if rule is None:
        return None
    red = g - _gain(float(prob.dead[idx].sum()), float(prob.lam[idx].sum()))
    if red <= TOL:
        return None
    return rule, red


# --------------------------------------------------------------------------
# starting trees


def _grow_greedy(b: _Builder, nd: _Node, max_depth: int) -> None:
    if nd.depth >= max_depth:
        return
    g, rule = _best_rule(b.prob, nd.idx, None, None)
    if rule is None or g - _gain(nd.D, nd.M) <= TOL:
        return
    b.split(nd, rule)
    _grow_greedy(b, nd.left, max_depth)
    _grow_greedy(b, nd.right, max_depth)


def _prune(nd: _Node, alpha: float) -> float:
    """Optimal alpha-pruning of a fixed tree; returns the subtree value."""
    if nd.is_leaf:
        return _gain(nd.D, nd.M)
    keep = _prune(nd.left, alpha) + _prune(nd.right, alpha) - alpha
    leaf = _gain(nd.D, nd.M)
    if leaf >= keep:
        _collapse(nd)
        return leaf
    return keep


def _greedy_root(b: _Builder, max_depth: int, alpha: float) -> _Node:
    root = b.node(1)
    b.set_members(root, np.arange(b.prob.n))
    _grow_greedy(b, root, max_depth)
    if alpha > 0:
        _prune(root, alpha)
    return root


def _random_rule(prob: _Problem, idx, j, rng) -> Optional[SplitRule]:
    x = prob.X[idx, j]
    mb = prob.min_bucket
    if prob.subset_feature[j]:
        levels, counts = np.unique(x, return_counts=True)
        if levels.size < 2:
            return None
        order = None
        if levels.size > MAX_SUBSET_LEVELS:
            order = rng.permutation(levels.size)
        masks = _subset_masks(levels.size, True, order)
        left_n = masks.astype(np.int64) @ counts
        ok = np.flatnonzero((left_n >= mb) & (x.size - left_n >= mb))
        if ok.size == 0:
            return None
        k = ok[rng.integers(ok.size)]
        return SplitRule(j, levels=frozenset(int(v) for v in levels[masks[k]]))
    vals, counts = np.unique(x, return_counts=True)
    if vals.size < 2:
        return None
    left_n = np.cumsum(counts)[:-1]
    ok = np.flatnonzero((left_n >= mb) & (x.size - left_n >= mb))
    if ok.size == 0:
        return None
    k = ok[rng.integers(ok.size)]
    return SplitRule(j, threshold=0.5 * (vals[k] + vals[k + 1]))


def _random_root(b: _Builder, max_depth: int, rng) -> _Node:
    target = int(rng.integers(1, max_depth + 1))
    root = b.node(1)
    b.set_members(root, np.arange(b.prob.n))

    def grow(nd):
        if nd.depth >= target:
            return
        for j in rng.permutation(b.prob.p):
            rule = _random_rule(b.prob, nd.idx, int(j), rng)
            if rule is not None:
                b.split(nd, rule)
                grow(nd.left)
                grow(nd.right)
                return

    grow(root)
    return root


def _finish(b: _Builder, root: _Node, alpha: float) -> SurvivalTree:
    return build_tree(
        _to_structure(root), b.prob.data, baseline=b.prob.baseline,
        alpha=alpha, min_bucket=b.prob.min_bucket,
    )


def _params_alpha(params: TrainParams) -> float:
    return 0.0 if params.alpha == "auto" else float(params.alpha)


def greedy_grow(data: Dataset, params: TrainParams) -> SurvivalTree:
    """Top-down greedy tree, then optimal pruning at ``params.alpha``.

    Splits are added while they reduce the leaf error, up to ``max_depth``
    (root at depth 1) and ``min_bucket``. A fixed positive ``alpha`` prunes
    every subtree whose error reduction does not pay for its splits.
    """
    if data.n == 0:
        raise DataError("empty dataset")
    params.validate()
    alpha = _params_alpha(params)
    b = _Builder(_Problem(data, nelson_aalen(data.time, data.event), params.min_bucket))
    return _finish(b, _greedy_root(b, params.max_depth, alpha), alpha)


def random_start_tree(data: Dataset, params: TrainParams, rng) -> SurvivalTree:
    """Random feasible tree of random depth ``<= max_depth``, fitted."""
    params.validate()
    b = _Builder(_Problem(data, nelson_aalen(data.time, data.event), params.min_bucket))
    return _finish(b, _random_root(b, params.max_depth, rng), _params_alpha(params))


# --------------------------------------------------------------------------
# coordinate descent


def _descend(b: _Builder, root: _Node, alpha: float, rng, max_depth, max_sweeps: int):
    prob = b.prob
    trace = SearchTrace(prob.sat - _value(root, alpha))
    limit = math.inf if max_depth is None else max_depth
    for _ in range(max_sweeps):
        nodes = list(_walk(root))
        improved = False
        for i in rng.permutation(len(nodes)):
            nd = nodes[i]
            if not nd.alive:
                continue
            if nd.is_leaf:
                if nd.depth >= limit:
                    continue
                here = _gain(nd.D, nd.M)
                g, rule = _best_rule(prob, nd.idx, None, None)
                if rule is not None and g - alpha > here + TOL:
                    b.split(nd, rule)
                    trace.moves.append((nd.uid, "create", here - (g - alpha)))
                    improved = True
                continue
            current = _value(nd, alpha)
            keep, removed = _best_deletion(prob, nd, alpha)
            if removed > current + TOL:
                _delete(b, nd, keep)
                trace.moves.append((nd.uid, "delete", current - removed))
                improved = True
                continue
            g, rule = _best_rule(prob, nd.idx, nd.left, nd.right)
            if rule is None or rule == nd.rule:
                continue
            extra = alpha * (_count_splits(nd) - 1)
            if g - extra - alpha > current + TOL:
                old_rule = nd.rule
                nd.rule = rule
                b.set_members(nd, nd.idx)
                new = _value(nd, alpha)
                if new > current + TOL:
                    trace.moves.append((nd.uid, "replace", current - new))
                    improved = True
                else:  # kernel rounding; keep the old split
                    nd.rule = old_rule
                    b.set_members(nd, nd.idx)
        trace.objectives.append(prob.sat - _value(root, alpha))
        if not improved:
            break
    return root, trace


def _promoted_value(prob: _Problem, nd: _Node, sub: _Node, alpha: float) -> float:
    """Value of hanging ``sub`` directly at ``nd`` (members rerouted), or
    ``-inf`` if that breaks ``min_bucket``."""
    pos, n_leaves = _local_leaves(prob, sub, nd.idx)
    counts = np.bincount(pos, None, n_leaves)
    if counts.min() < max(prob.min_bucket, 1):
        return -math.inf
    D = np.bincount(pos, prob.dead[nd.idx], n_leaves)
    M = np.bincount(pos, prob.lam[nd.idx], n_leaves)
    return sum(_gain(d, m) for d, m in zip(D, M)) - alpha * (n_leaves - 1)


def _best_deletion(prob: _Problem, nd: _Node, alpha: float):
    """Delete the split at ``nd``: collapse it to a leaf or replace it by one
    of its child subtrees. Returns ``(kept child or None, value)``."""
    best = (None, _gain(nd.D, nd.M))
    for child in (nd.left, nd.right):
        if child.is_leaf:
            continue
        v = _promoted_value(prob, nd, child, alpha)
        if v > best[1]:
            best = (child, v)
    return best


def _delete(b: _Builder, nd: _Node, keep: Optional[_Node]) -> None:
    struct = None if keep is None else _to_structure(keep)
    _collapse(nd)
    if struct is not None:
        nd.rule = struct.rule
        nd.left = b.from_structure(struct.left, nd.depth + 1)
        nd.right = b.from_structure(struct.right, nd.depth + 1)
        b.set_members(nd, nd.idx)


def _count_splits(nd: _Node) -> int:
    return sum(1 for x in _walk(nd) if not x.is_leaf)


def local_search(start: SurvivalTree, data: Dataset, alpha: float, rng,
                 max_depth: Optional[int] = None, max_sweeps: int = 100):
    """Coordinate descent from ``start`` until no single move improves.

    ``start`` must be fitted on ``data``; its baseline and ``min_bucket`` are
    kept. Returns the locally optimal tree and its :class:`SearchTrace`.
    """
    if alpha < 0:
        raise ModelError("invalid complexity parameter")
    b = _Builder(_Problem(data, start.baseline, start.min_bucket))
    root = b.from_structure(start.structure())
    b.set_members(root, np.arange(data.n))
    root, trace = _descend(b, root, float(alpha), rng, max_depth, max_sweeps)
    return _finish(b, root, float(alpha)), trace


def _train_fixed(data: Dataset, params: TrainParams, alpha: float):
    baseline = nelson_aalen(data.time, data.event)
    prob = _Problem(data, baseline, params.min_bucket)
    results = []
    for r in range(params.restarts + 1):
        b = _Builder(prob)
        rng = np.random.default_rng(params.seed + r)
        if r == 0:
            root = _greedy_root(b, params.max_depth, alpha)
        else:
            root = _random_root(b, params.max_depth, rng)
        root, trace = _descend(b, root, alpha, rng, params.max_depth, params.max_sweeps)
        trace.restart = r
        results.append((trace.objectives[-1], r, b, root, trace))
    best = min(results, key=lambda t: (t[0], t[1]))
    return _finish(best[2], best[3], alpha), [t[4] for t in results]


def train(data: Dataset, params: TrainParams):
    """Best of ``restarts`` random-start searches plus one greedy-start search.

    With ``alpha="auto"`` the complexity parameter is calibrated first. Returns
    the winning tree and one :class:`SearchTrace` per start (greedy first).
    """
    if data.n == 0:
        raise DataError("empty dataset")
    params.validate()
    alpha = params.alpha
    if alpha == "auto":
        if data.n < 10 * params.min_bucket:
            warnings.warn("too few observations to calibrate alpha; using alpha=0", stacklevel=2)
            alpha = 0.0
        else:
            alpha = calibrate_alpha(data, params)
    return _train_fixed(data, params, float(alpha))


# --------------------------------------------------------------------------
# model selection


def fold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Deterministic shuffled k-fold partition of ``range(n)``."""
    if folds < 2 or folds > n:
        raise ValueError("need 2 <= folds <= n")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def holdout_error(tree: SurvivalTree, data: Dataset) -> float:
    """Out-of-sample deviance of ``tree`` on ``data``.

    Members are scored with the tree's training thetas against the training
    baseline evaluated at their times. Hazards and thetas are floored at
    ``1e-8`` so a validation death before the first training death, or in a
    leaf that had no training deaths, costs a large but finite amount.
    """
    ids = tree.apply(data.X)
    lam = np.maximum(np.asarray(tree.baseline(data.time), dtype=np.float64), HOLDOUT_FLOOR)
    d = data.event.astype(np.float64)
    theta = np.array([max(tree.nodes[k].theta, HOLDOUT_FLOOR) for k in ids]) if ids.size else np.zeros(0)
    dead = d > 0
    terms = lam * theta - d
    terms[dead] += np.log(1.0 / (lam[dead] * theta[dead]))
    return float(np.maximum(terms, 0.0).sum())


def alpha_grid(data: Dataset, points: int = 12, ratio: float = 2.0, scale: float = 1e-3) -> list[float]:
    """``[0] + [a_min * ratio**j]`` with ``a_min = scale * null-tree error``."""
    from .tree_model import node_error, fit_leaf_coefficient

    baseline = nelson_aalen(data.time, data.event)
    lam = baseline(data.time)
    null_err = node_error(lam, data.event, fit_leaf_coefficient(lam, data.event))
    a_min = scale * max(null_err, 1e-12)
    return [0.0] + [a_min * ratio ** j for j in range(points)]


def _cv_scores(data: Dataset, grid: Sequence[tuple], params: TrainParams, folds: int, fit):
    """Mean holdout error per ``(max_depth, alpha)`` grid point."""
    parts = fold_indices(data.n, folds, params.seed)
    totals = np.zeros(len(grid))
    used = 0
    everything = np.arange(data.n)
    for f, val_idx in enumerate(parts):
        val = data.take(val_idx)
        if val.event.sum() == 0:
            warnings.warn(f"fold {f} has no deaths; skipped", stacklevel=3)
            continue
        tr = data.take(np.setdiff1d(everything, val_idx))
        totals += np.array([holdout_error(t, val) for t in fit(tr, grid)])
        used += 1
    if used == 0:
        raise DataError("no fold with deaths")
    return totals / used


def _ost_fit(params: TrainParams):
    def fit(tr: Dataset, grid):
        out = []
        for depth, alpha in grid:
            p = dc_replace(params, max_depth=int(depth), alpha=float(alpha))
            out.append(_train_fixed(tr, p, float(alpha))[0])
        return out

    return fit


def _greedy_fit(params: TrainParams):
    def fit(tr: Dataset, grid):
        prob = _Problem(tr, nelson_aalen(tr.time, tr.event), params.min_bucket)
        grown = {}
        out = []
        for depth, alpha in grid:
            if depth not in grown:
                b = _Builder(prob)
                grown[depth] = _to_structure(_greedy_root(b, int(depth), 0.0))
            b = _Builder(prob)
            root = b.from_structure(grown[depth])
            b.set_members(root, np.arange(prob.n))
            if alpha > 0:
                _prune(root, float(alpha))
            out.append(_finish(b, root, float(alpha)))
        return out

    return fit


def _pick(grid, scores, prefer_large_alpha=True):
    best = min(scores)
    tied = [g for g, s in zip(grid, scores) if s <= best + 1e-9 * max(1.0, abs(best))]
    # ties: simpler model first (larger alpha, then smaller depth)
    return min(tied, key=lambda g: (-g[1], g[0])) if prefer_large_alpha else tied[0]


def calibrate_alpha(data: Dataset, params: TrainParams, grid: Optional[Sequence[float]] = None) -> float:
    """Cross-validated complexity parameter at ``params.max_depth``.

    Each grid value is scored by the mean holdout deviance of trees trained
    at that value over ``params.folds`` folds; ties go to the larger value.
    """
    params.validate()
    if data.n < 10 * params.min_bucket:
        raise DataError("too few observations to calibrate alpha (need n >= 10 * min_bucket)")
    grid = alpha_grid(data) if grid is None else list(grid)
    if len(grid) == 1:
        return float(grid[0])
    points = [(params.max_depth, float(a)) for a in grid]
    scores = _cv_scores(data, points, params, params.folds, _ost_fit(params))
    return float(_pick(points, scores)[1])


def cross_validate(data: Dataset, depth_grid: Sequence[int], alpha_grid_values: Optional[Sequence[float]] = None,
                   folds: int = 5, params: Optional[TrainParams] = None,
                   trainer: str = "ost") -> TrainParams:
    """Pick ``(max_depth, alpha)`` by k-fold holdout deviance.

    ``trainer`` is ``"ost"`` (restarted local search) or ``"greedy"``.
    ``alpha_grid_values`` defaults to :func:`alpha_grid` of ``data``.
    Returns a copy of ``params`` with the chosen depth and a fixed alpha.
    """
    params = (params or TrainParams()).validate()
    if data.n < folds:
        raise DataError("need at least as many observations as folds")
    if alpha_grid_values is None:
        alpha_grid_values = alpha_grid(data)
    points = [(int(d), float(a)) for d in depth_grid for a in alpha_grid_values]
    if not points:
        raise ValueError("empty parameter grid")
    if len(points) == 1:
        d, a = points[0]
        return dc_replace(params, max_depth=d, alpha=a)
    fit = _ost_fit(params) if trainer == "ost" else _greedy_fit(params)
    scores = _cv_scores(data, points, params, folds, fit)
    d, a = _pick(points, scores)
    return dc_replace(params, max_depth=d, alpha=a)


def fit_with(data: Dataset, params: TrainParams, trainer: str = "ost") -> SurvivalTree:
    """Train with fixed ``params`` using the named trainer."""
    if trainer == "greedy":
        return greedy_grow(data, params)
    return train(data, params)[0]


def trace_to_json(traces: Sequence[SearchTrace]) -> str:
    return json.dumps([
        {"restart": t.restart, "initial": t.initial_objective, "objectives": t.objectives,
         "moves": [list(m) for m in t.moves]} for t in traces
    ], sort_keys=True)
