"""Survival trees: structure, likelihood node error, leaf fitting, I/O.

Each leaf ``k`` carries a proportional-hazards multiplier ``theta_k`` on the
frozen training Nelson-Aalen baseline ``L(t)``::

    theta_k = sum(delta_i) / sum(L(t_i))                  (i in leaf k)
    error_k = sum(delta_i log(delta_i / L(t_i)) - delta_i log(theta_k)
                  - delta_i + L(t_i) theta_k)

``error_k`` is the deviance of the leaf against the saturated model that
gives every observation its own multiplier ``delta_i / L(t_i)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, NamedTuple, Optional, Union

import numpy as np

from .survival_core import (
    DataError,
    Dataset,
    Feature,
    StepFunction,
    kaplan_meier,
    nelson_aalen,
)

__all__ = [
    "ModelError",
    "SplitRule",
    "Split",
    "TreeNode",
    "SurvivalTree",
    "LeafFitReport",
    "apply_structure",
    "build_tree",
    "null_tree",
    "assign_leaf",
    "fit_leaf_coefficient",
    "saturated_coefficients",
    "node_error",
    "leaf_reports",
    "tree_error",
    "objective",
    "fit_leaves",
    "predict_curve",
    "serialize",
    "deserialize",
    "to_dot",
]


class ModelError(ValueError):
    """Raised for malformed models, schema mismatches and fit violations."""


@dataclass(frozen=True)
class SplitRule:
    """Axis-parallel split.

    Threshold rules send ``x <= threshold`` left; subset rules send the listed
    level indices left and every other level right.
    """

    feature: int
    threshold: Optional[float] = None
    levels: Optional[frozenset] = None

    def __post_init__(self):
        if (self.threshold is None) == (self.levels is None):
            raise ModelError("split needs exactly one of threshold or levels")
        if self.levels is not None:
            lv = frozenset(int(v) for v in self.levels)
            if not lv:
                raise ModelError("subset split needs a nonempty level set")
            object.__setattr__(self, "levels", lv)
        else:
            object.__setattr__(self, "threshold", float(self.threshold))

    @property
    def is_subset(self) -> bool:
        return self.levels is not None

    def goes_left(self, x):
        """Boolean (array) for the covariate value(s) ``x`` of this feature."""
        if self.levels is None:
            return x <= self.threshold
        x = np.asarray(x)
        return np.isin(x, np.fromiter(self.levels, dtype=np.float64))

    def describe(self, features=None) -> str:
        name = features[self.feature].name if features else f"x{self.feature + 1}"
        if self.levels is None:
            return f"{name} <= {self.threshold:.6g}"
        if features and features[self.feature].is_categorical:
            labels = [str(features[self.feature].levels[k]) for k in sorted(self.levels)]
        else:
            labels = [str(k) for k in sorted(self.levels)]
        return f"{name} in {{{', '.join(labels)}}}"

    def to_dict(self) -> dict:
        if self.levels is None:
            return {"feature": self.feature, "threshold": self.threshold}
        return {"feature": self.feature, "levels": sorted(self.levels)}


class Split(NamedTuple):
    """Internal node of a nested tree structure; leaves are ``None``."""

    rule: SplitRule
    left: "Structure"
    right: "Structure"


Structure = Union[None, Split]


def count_splits(struct: Structure) -> int:
    if struct is None:
        return 0
    return 1 + count_splits(struct.left) + count_splits(struct.right)


def structure_depth(struct: Structure) -> int:
    """Depth with the root counted as depth 1."""
    if struct is None:
        return 1
    return 1 + max(structure_depth(struct.left), structure_depth(struct.right))


def apply_structure(struct: Structure, X: np.ndarray) -> np.ndarray:
    """Preorder id of the leaf reached by every row of ``X``.

    Ids match those :func:`build_tree` assigns (root 0, left subtree first).
    """
    X = np.asarray(X, dtype=np.float64)
    out = np.empty(X.shape[0], dtype=np.int64)
    counter = [0]

    def walk(node, idx):
        my_id = counter[0]
        counter[0] += 1
        if node is None:
            out[idx] = my_id
            return
        left = node.rule.goes_left(X[idx, node.rule.feature])
        walk(node.left, idx[left])
        walk(node.right, idx[~left])

    walk(struct, np.arange(X.shape[0]))
    return out


@dataclass(frozen=True)
class TreeNode:
    id: int
    parent: Optional[int]
    depth: int
    split: Optional[SplitRule] = None
    left: Optional[int] = None
    right: Optional[int] = None
    theta: float = 0.0
    curve: Optional[StepFunction] = None
    member_count: int = 0
    death_count: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.split is None


@dataclass(frozen=True)
class LeafFitReport:
    leaf: int
    theta: float
    error: float


@dataclass(frozen=True)
class SurvivalTree:
    """Fitted tree. Treat as immutable; fitting functions return new trees."""

    nodes: Mapping[int, TreeNode]
    root: int
    baseline: StepFunction
    features: tuple
    alpha: float = 0.0
    min_bucket: int = 1
    null_curve: Optional[StepFunction] = None

    @property
    def leaves(self) -> list[int]:
        return sorted(k for k, nd in self.nodes.items() if nd.is_leaf)

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    @property
    def complexity(self) -> int:
        return sum(1 for nd in self.nodes.values() if not nd.is_leaf)

    @property
    def depth(self) -> int:
        return max(nd.depth for nd in self.nodes.values())

    def structure(self) -> Structure:
        def walk(k):
            nd = self.nodes[k]
            if nd.is_leaf:
                return None
            return Split(nd.split, walk(nd.left), walk(nd.right))

        return walk(self.root)

    def apply(self, X) -> np.ndarray:
        """Leaf id for every row of ``X`` (vectorised routing)."""
        X = _check_matrix(self, X)
        out = np.empty(X.shape[0], dtype=np.int64)
        stack = [(self.root, np.arange(X.shape[0]))]
        while stack:
            k, idx = stack.pop()
            nd = self.nodes[k]
            if nd.is_leaf:
                out[idx] = k
                continue
            left = nd.split.goes_left(X[idx, nd.split.feature])
            stack.append((nd.left, idx[left]))
            stack.append((nd.right, idx[~left]))
        return out

    def leaf_thetas(self) -> dict[int, float]:
        return {k: self.nodes[k].theta for k in self.leaves}

    def curves_for(self, X) -> list[StepFunction]:
        return [self.nodes[k].curve for k in self.apply(X)]


def _check_matrix(tree: SurvivalTree, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != len(tree.features):
        raise ModelError("schema mismatch: expected %d covariates" % len(tree.features))
    for j, f in enumerate(tree.features):
        if f.is_categorical:
            col = X[:, j]
            if np.any(col != np.floor(col)) or np.any(col < 0) or np.any(col >= f.level_count):
                raise ModelError(f"schema mismatch: column {f.name!r} is not a valid level index")
    return X


def check_schema(tree: SurvivalTree, data: Dataset) -> None:
    """Raise ``ModelError`` unless ``data`` has the tree's feature schema."""
    if len(tree.features) != len(data.features):
        raise ModelError("schema mismatch: covariate count differs")
    for a, b in zip(tree.features, data.features):
        if a.name != b.name or a.kind != b.kind or tuple(a.levels) != tuple(b.levels):
            raise ModelError(f"schema mismatch at column {a.name!r}")


def assign_leaf(tree: SurvivalTree, row) -> int:
    """Id of the leaf that ``row`` (one covariate vector) is routed to."""
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1:
        raise ModelError("schema mismatch: expected a single covariate vector")
    return int(tree.apply(row.reshape(1, -1))[0])


# --------------------------------------------------------------------------
# leaf likelihood


def fit_leaf_coefficient(hazard, event) -> float:
    """Maximum-likelihood hazard multiplier of one leaf.

    ``hazard`` holds the baseline cumulative hazard at each member's time.
    """
    hazard = np.asarray(hazard, dtype=np.float64)
    event = np.asarray(event, dtype=np.float64)
    if hazard.size == 0:
        raise ModelError("empty leaf")
    deaths = float(event.sum())
    if deaths == 0:
        return 0.0
    mass = float(hazard.sum())
    if mass <= 0:
        raise ModelError("degenerate leaf")
    return deaths / mass


def saturated_coefficients(time, event, baseline: StepFunction) -> np.ndarray:
    """Per-observation multipliers ``delta_i / L(t_i)`` (0 for censored)."""
    lam = np.asarray(baseline(np.asarray(time, dtype=np.float64)), dtype=np.float64).reshape(-1)
    event = np.asarray(event, dtype=np.float64).reshape(-1)
    dead = event > 0
    if np.any(lam[dead] <= 0):
        raise ModelError("baseline mismatch: a death has zero cumulative hazard")
    out = np.zeros_like(lam)
    out[dead] = event[dead] / lam[dead]
    return out


def node_error(hazard, event, theta: float) -> float:
    """Deviance of the members of one node under multiplier ``theta``."""
    lam = np.asarray(hazard, dtype=np.float64)
    d = np.asarray(event, dtype=np.float64)
    dead = d > 0
    deaths = float(d.sum())
    mass = float(lam.sum())
    if deaths == 0:
        return max(0.0, mass * theta)
    if np.any(lam[dead] <= 0):
        raise ModelError("baseline mismatch: a death has zero cumulative hazard")
    if theta <= 0:
        return math.inf
    sat = float(np.sum(d[dead] * np.log(d[dead] / lam[dead])))
    # the fitted coefficient satisfies mass * theta == deaths identically
    lin = 0.0 if theta == deaths / mass else mass * theta - deaths
    # same log routine as ``sat`` so a one-death leaf cancels exactly
    return max(0.0, sat - deaths * float(np.log(theta)) + lin)


def _member_hazard(tree: SurvivalTree, data: Dataset) -> np.ndarray:
    return np.asarray(tree.baseline(data.time), dtype=np.float64)


def leaf_reports(tree: SurvivalTree, data: Dataset) -> list[LeafFitReport]:
    """Error of every leaf of a fitted tree on ``data`` at the stored thetas."""
    ids = tree.apply(data.X)
    lam = _member_hazard(tree, data)
    out = []
    for k in tree.leaves:
        m = ids == k
        theta = tree.nodes[k].theta
        err = node_error(lam[m], data.event[m], theta) if m.any() else 0.0
        out.append(LeafFitReport(k, theta, err))
    return out


def tree_error(tree: SurvivalTree, data: Dataset) -> float:
    """Sum of leaf errors."""
    return float(sum(r.error for r in leaf_reports(tree, data)))


def objective(tree: SurvivalTree, data: Dataset, alpha: Optional[float] = None) -> float:
    """``tree_error + alpha * (number of splits)``; ``alpha`` defaults to the tree's."""
    alpha = tree.alpha if alpha is None else alpha
    if alpha < 0 or not np.isfinite(alpha):
        raise ModelError("invalid complexity parameter")
    return tree_error(tree, data) + alpha * tree.complexity


# --------------------------------------------------------------------------
# construction and fitting


def build_tree(
    struct: Structure,
    data: Dataset,
    *,
    baseline: Optional[StepFunction] = None,
    alpha: float = 0.0,
    min_bucket: int = 1,
) -> SurvivalTree:
    """Materialise a nested structure as a fitted :class:`SurvivalTree`.

    Node ids are assigned in preorder. ``baseline`` defaults to the
    Nelson-Aalen estimate of ``data``.
    """
    if baseline is None:
        baseline = nelson_aalen(data.time, data.event)
    nodes: dict[int, TreeNode] = {}
    counter = [0]

    def walk(node, parent, depth):
        my_id = counter[0]
        counter[0] += 1
        if node is None:
            nodes[my_id] = TreeNode(my_id, parent, depth)
            return my_id
        left = walk(node.left, my_id, depth + 1)
        right = walk(node.right, my_id, depth + 1)
        nodes[my_id] = TreeNode(my_id, parent, depth, node.rule, left, right)
        return my_id

    walk(struct, None, 1)
    tree = SurvivalTree(nodes, 0, baseline, tuple(data.features), float(alpha), int(min_bucket))
    return fit_leaves(tree, data)


def null_tree(data: Dataset, *, alpha: float = 0.0, min_bucket: int = 1,
              baseline: Optional[StepFunction] = None) -> SurvivalTree:
    return build_tree(None, data, baseline=baseline, alpha=alpha, min_bucket=min_bucket)


def fit_leaves(tree: SurvivalTree, data: Dataset) -> SurvivalTree:
    """Refit every leaf's theta, Kaplan-Meier curve and counts on ``data``."""
    check_schema(tree, data)
    ids = tree.apply(data.X)
    lam = _member_hazard(tree, data)
    nodes = dict(tree.nodes)
    for k in tree.leaves:
        m = ids == k
        count = int(m.sum())
        # min_bucket binds split children; a lone root only needs one member
        floor = 1 if k == tree.root else max(tree.min_bucket, 1)
        if count < floor:
            raise ModelError(f"min bucket violation at leaf {k}: {count} < {tree.min_bucket}")
        d = data.event[m]
        nodes[k] = replace(
            nodes[k],
            theta=fit_leaf_coefficient(lam[m], d),
            curve=kaplan_meier(data.time[m], d),
            member_count=count,
            death_count=int(d.sum()),
        )
    for k, nd in nodes.items():
        if not nd.is_leaf:
            m = _subtree_mask(tree, k, ids)
            nodes[k] = replace(nd, member_count=int(m.sum()), death_count=int(data.event[m].sum()))
    return replace(tree, nodes=nodes, null_curve=kaplan_meier(data.time, data.event))


def _subtree_mask(tree: SurvivalTree, k: int, leaf_ids: np.ndarray) -> np.ndarray:
    below = []
    stack = [k]
    while stack:
        j = stack.pop()
        nd = tree.nodes[j]
        if nd.is_leaf:
            below.append(j)
        else:
            stack.extend((nd.left, nd.right))
    return np.isin(leaf_ids, below)


def predict_curve(tree: SurvivalTree, row) -> StepFunction:
    """Kaplan-Meier curve of the leaf ``row`` is routed to."""
    return tree.nodes[assign_leaf(tree, row)].curve


# --------------------------------------------------------------------------
# serialization


def serialize(tree: SurvivalTree) -> str:
    """Canonical JSON document (stable key order, so byte-reproducible)."""
    nodes = []
    for k in sorted(tree.nodes):
        nd = tree.nodes[k]
        entry = {"id": nd.id, "parent": nd.parent, "depth": nd.depth}
        if nd.is_leaf:
            entry["leaf"] = {
                "theta": nd.theta,
                "member_count": nd.member_count,
                "death_count": nd.death_count,
                "curve": nd.curve.to_dict() if nd.curve is not None else None,
            }
        else:
            entry["split"] = nd.split.to_dict()
            entry["left"] = nd.left
            entry["right"] = nd.right
            entry["member_count"] = nd.member_count
            entry["death_count"] = nd.death_count
        nodes.append(entry)
    doc = {
        "root": tree.root,
        "min_bucket": tree.min_bucket,
        "alpha": tree.alpha,
        "features": [f.to_dict() for f in tree.features],
        "baseline": {"knots": tree.baseline.knots.tolist(), "values": tree.baseline.values.tolist()},
        "null_curve": tree.null_curve.to_dict() if tree.null_curve is not None else None,
        "nodes": nodes,
    }
    return json.dumps(doc, sort_keys=True, indent=1)


def _need(obj, key, path):
    if not isinstance(obj, dict) or key not in obj:
        raise ModelError(f"parse error at {path}: missing {key!r}")
    return obj[key]


def deserialize(doc) -> SurvivalTree:
    """Inverse of :func:`serialize`; ``doc`` is a JSON string or parsed dict."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ModelError(f"parse error at $: {exc.msg} (char {exc.pos})") from None
    if not isinstance(doc, dict):
        raise ModelError("parse error at $: expected an object")
    try:
        features = tuple(
            Feature.from_dict(f) for f in _need(doc, "features", "$")
        )
    except (KeyError, TypeError, DataError) as exc:
        raise ModelError(f"parse error at $.features: {exc}") from None
    try:
        b = _need(doc, "baseline", "$")
        baseline = StepFunction(_need(b, "knots", "$.baseline"), _need(b, "values", "$.baseline"), 0.0)
        nc = doc.get("null_curve")
        null_curve = StepFunction.from_dict(nc, 1.0) if nc else None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(f"parse error at $.baseline: {exc}") from None

    nodes: dict[int, TreeNode] = {}
    raw_nodes = _need(doc, "nodes", "$")
    if not isinstance(raw_nodes, list):
        raise ModelError("parse error at $.nodes: expected a list")
    for i, e in enumerate(raw_nodes):
        path = f"$.nodes[{i}]"
        try:
            nid = int(_need(e, "id", path))
            parent = e.get("parent")
            depth = int(_need(e, "depth", path))
            if "split" in e:
                s = e["split"]
                feat = int(_need(s, "feature", path + ".split"))
                if not 0 <= feat < len(features):
                    raise ModelError(f"parse error at {path}.split.feature: out of range")
                if "levels" in s:
                    rule = SplitRule(feat, levels=frozenset(s["levels"]))
                else:
                    rule = SplitRule(feat, threshold=float(_need(s, "threshold", path + ".split")))
                nodes[nid] = TreeNode(
                    nid, parent, depth, rule, int(_need(e, "left", path)), int(_need(e, "right", path)),
                    member_count=int(e.get("member_count", 0)), death_count=int(e.get("death_count", 0)),
                )
            else:
                lf = _need(e, "leaf", path)
                curve = lf.get("curve")
                nodes[nid] = TreeNode(
                    nid, parent, depth,
                    theta=float(_need(lf, "theta", path + ".leaf")),
                    curve=StepFunction.from_dict(curve, 1.0) if curve else None,
                    member_count=int(lf.get("member_count", 0)),
                    death_count=int(lf.get("death_count", 0)),
                )
        except ModelError:
            raise
        except (TypeError, ValueError, KeyError, AttributeError) as exc:
            raise ModelError(f"parse error at {path}: {exc}") from None
    root = int(_need(doc, "root", "$"))
    _validate_nodes(nodes, root)
    return SurvivalTree(
        nodes, root, baseline, features,
        float(doc.get("alpha", 0.0)), int(doc.get("min_bucket", 1)), null_curve,
    )


def _validate_nodes(nodes: Mapping[int, TreeNode], root: int) -> None:
    if root not in nodes:
        raise ModelError("parse error at $.root: unknown node id")
    seen = set()
    stack = [root]
    while stack:
        k = stack.pop()
        if k in seen:
            raise ModelError(f"parse error at node {k}: cycle in tree")
        seen.add(k)
        nd = nodes[k]
        if not nd.is_leaf:
            for c in (nd.left, nd.right):
                if c not in nodes:
                    raise ModelError(f"parse error at node {k}: unknown child {c}")
                stack.append(c)
    if seen != set(nodes):
        raise ModelError("parse error at $.nodes: unreachable nodes")


# --------------------------------------------------------------------------
# DOT export (display only)


def _dot_escape(s: str) -> str:
    # labels carry intentional \n escapes, so only quotes are escaped
    return s.replace('"', '\\"')


def to_dot(tree: SurvivalTree, n_samples: int = 5) -> str:
    """Graphviz digraph; leaves list theta, counts and KM samples."""
    t_hi = float(tree.baseline.knots[-1]) if tree.baseline.knots.size else 1.0
    grid = np.linspace(0.0, t_hi, n_samples)
    lines = ["digraph survival_tree {", '  node [shape=box, fontname="Helvetica"];']
    for k in sorted(tree.nodes):
        nd = tree.nodes[k]
        if nd.is_leaf:
            prop = nd.death_count / nd.member_count if nd.member_count else 0.0
            samples = ", ".join(
                f"S({t:.3g})={nd.curve(t):.3f}" for t in grid
            ) if nd.curve is not None else ""
            label = (
                f"leaf {k}\\ntheta={nd.theta:.4g}\\nn={nd.member_count}, deaths={nd.death_count}"
                f" ({prop:.1%})\\n{samples}"
            )
            lines.append(f'  n{k} [label="{_dot_escape(label)}", style=rounded];')
        else:
            label = f"node {k}\\n{nd.split.describe(tree.features)}\\nn={nd.member_count}"
            lines.append(f'  n{k} [label="{_dot_escape(label)}"];')
    for k in sorted(tree.nodes):
        nd = tree.nodes[k]
        if not nd.is_leaf:
            lines.append(f'  n{k} -> n{nd.left} [label="yes"];')
            lines.append(f'  n{k} -> n{nd.right} [label="no"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
