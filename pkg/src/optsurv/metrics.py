"""Survival-model evaluation: Cox score, concordance, Brier scores.

All ratio metrics compare a tree with the single-leaf null tree ``T0``:
``ratio = 1 - score(T) / score(T0)``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .survival_core import Dataset, StepFunction, censoring_km, kaplan_meier

__all__ = [
    "MetricError",
    "CoxConvergenceWarning",
    "RiskAssignment",
    "CoxFit",
    "MetricReport",
    "fit_cox",
    "cox_score",
    "cox_score_ratio",
    "concordance_counts",
    "harrell_c",
    "uno_c",
    "brier_point",
    "brier_point_ratio",
    "integrated_brier",
    "integrated_brier_ratio",
    "default_tau",
    "evaluate",
    "REPORT_COLUMNS",
]

G_FLOOR = 1e-6


class MetricError(ValueError):
    pass


class CoxConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class RiskAssignment:
    """Leaf membership and the risk score (hazard multiplier) per observation."""

    leaf: np.ndarray
    risk: np.ndarray

    @classmethod
    def from_tree(cls, tree, X) -> "RiskAssignment":
        leaf = tree.apply(X)
        risk = np.array([tree.nodes[k].theta for k in leaf], dtype=np.float64)
        return cls(leaf, risk)

    @classmethod
    def null(cls, n: int) -> "RiskAssignment":
        return cls(np.zeros(n, dtype=np.int64), np.ones(n))


# --------------------------------------------------------------------------
# Cox partial likelihood


@dataclass(frozen=True)
class CoxFit:
    loglik: float
    beta: dict
    converged: bool
    iterations: int


def _cox_parts(groups, time, event):
    """Distinct death times, deaths per time, and at-risk counts per group."""
    death_t, d_t = np.unique(time[event > 0], return_counts=True)
    K = int(groups.max()) + 1
    at_risk = np.empty((death_t.size, K))
    for k in range(K):
        tk = np.sort(time[groups == k])
        at_risk[:, k] = tk.size - np.searchsorted(tk, death_t, side="left")
    deaths_k = np.bincount(groups[event > 0], minlength=K).astype(np.float64)
    return d_t.astype(np.float64), at_risk, deaths_k


def _cox_eval(beta, d_t, at_risk, deaths_k):
    w = at_risk * np.exp(beta)[None, :]
    s0 = w.sum(axis=1)
    ll = float(deaths_k @ beta - d_t @ np.log(s0))
    p = w / s0[:, None]
    grad = deaths_k - d_t @ p
    hess = -(np.diag(d_t @ p) - (p * d_t[:, None]).T @ p)
    return ll, grad, hess


def fit_cox(leaf, time, event, max_iter: int = 100, tol: float = 1e-10) -> CoxFit:
    """Maximise the Breslow log partial likelihood with one coefficient per leaf.

    The most populous leaf is the reference (coefficient fixed at 0). Newton
    steps are halved until the likelihood does not decrease.
    """
    time = np.asarray(time, dtype=np.float64)
    event = np.asarray(event)
    if not np.any(event > 0):
        raise MetricError("cox score needs at least one uncensored observation")
    labels, groups = np.unique(np.asarray(leaf), return_inverse=True)
    d_t, at_risk, deaths_k = _cox_parts(groups, time, event)
    K = labels.size
    beta = np.zeros(K)
    ll, grad, hess = _cox_eval(beta, d_t, at_risk, deaths_k)
    if K == 1:
        return CoxFit(ll, {labels[0].item(): 0.0}, True, 0)
    ref = int(np.argmax(np.bincount(groups)))
    free = np.array([k for k in range(K) if k != ref])
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        H = hess[np.ix_(free, free)]
        g = grad[free]
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, -g, rcond=None)[0]
        scale = 1.0
        while True:
            cand = beta.copy()
            cand[free] += scale * step
            ll_new, grad_new, hess_new = _cox_eval(cand, d_t, at_risk, deaths_k)
            if ll_new >= ll - 1e-14 * abs(ll) or scale < 1e-10:
                break
            scale *= 0.5
        gain = ll_new - ll
        beta, ll, grad, hess = cand, ll_new, grad_new, hess_new
        if abs(gain) <= tol * max(1.0, abs(ll)):
            converged = True
            break
    if not converged:
        warnings.warn("cox fit diverged", CoxConvergenceWarning, stacklevel=2)
    return CoxFit(ll, {labels[k].item(): float(beta[k]) for k in range(K)}, converged, it)


def cox_score(assignment: RiskAssignment, time, event) -> float:
    """Maximised log partial likelihood of the leaf-indicator Cox model."""
    return fit_cox(assignment.leaf, time, event).loglik


def cox_score_ratio(assignment: RiskAssignment, time, event) -> float:
    tree = cox_score(assignment, time, event)
    null = cox_score(RiskAssignment.null(len(time)), time, event)
    if null == 0:
        raise MetricError("degenerate null Cox score")
    return 1.0 - tree / null


# --------------------------------------------------------------------------
# concordance


def concordance_counts(risk, time, event, weights=None, tau: float = math.inf):
    """Weighted ``(CC, DC, TR)`` over pairs with ``t_i > t_j``, ``delta_j = 1``
    and ``t_j < tau``; ``weights[j]`` multiplies every pair anchored at ``j``.
    """
    risk = np.asarray(risk, dtype=np.float64)
    time = np.asarray(time, dtype=np.float64)
    event = np.asarray(event)
    anchors = np.flatnonzero((event > 0) & (time < tau))
    w = np.ones(anchors.size) if weights is None else np.asarray(weights, dtype=np.float64)[anchors]
    uniq, rank = np.unique(risk, return_inverse=True)
    R = uniq.size
    cc = dc = tr = 0.0
    if R <= 256:
        # later[j, r] = #{i : t_i > t_j, rank_i = r}
        later = np.empty((anchors.size, R))
        tj = time[anchors]
        for r in range(R):
            tr_sorted = np.sort(time[rank == r])
            later[:, r] = tr_sorted.size - np.searchsorted(tr_sorted, tj, side="right")
        cum = np.cumsum(later, axis=1)
        total = cum[:, -1]
        rj = rank[anchors]
        below = np.where(rj > 0, cum[np.arange(anchors.size), rj - 1], 0.0)
        same = later[np.arange(anchors.size), rj]
        above = total - below - same
        cc, dc, tr = float(w @ below), float(w @ above), float(w @ same)
    else:
        for lo in range(0, anchors.size, 512):
            a = anchors[lo:lo + 512]
            ww = w[lo:lo + 512]
            later = time[None, :] > time[a, None]
            lt = later & (risk[None, :] < risk[a, None])
            gt = later & (risk[None, :] > risk[a, None])
            eq = later & (risk[None, :] == risk[a, None])
            cc += float(ww @ lt.sum(axis=1))
            dc += float(ww @ gt.sum(axis=1))
            tr += float(ww @ eq.sum(axis=1))
    return cc, dc, tr


def harrell_c(assignment, time, event) -> float:
    """``(CC + 0.5 TR) / (CC + DC + TR)``; a higher risk on the earlier death
    is concordant."""
    risk = assignment.risk if isinstance(assignment, RiskAssignment) else assignment
    cc, dc, tr = concordance_counts(risk, time, event)
    if cc + dc + tr == 0:
        raise MetricError("no comparable pairs")
    return (cc + 0.5 * tr) / (cc + dc + tr)


def uno_c(assignment, time, event, tau: Optional[float] = None, G: Optional[StepFunction] = None) -> float:
    """IPCW concordance truncated at ``tau`` with weights ``G(t_j)^-2``.

    ``G`` defaults to the censoring Kaplan-Meier of the evaluation data; tied
    risks count one half, as in :func:`harrell_c`.
    """
    risk = assignment.risk if isinstance(assignment, RiskAssignment) else assignment
    time = np.asarray(time, dtype=np.float64)
    event = np.asarray(event)
    tau = math.inf if tau is None else float(tau)
    if G is None:
        G = censoring_km(time, event)
    g = np.asarray(G(time), dtype=np.float64)
    needed = (event > 0) & (time < tau)
    if np.any(g[needed] <= 0):
        raise MetricError("censoring weight degenerate at tau; use a smaller tau")
    w = np.zeros_like(time)
    w[needed] = 1.0 / g[needed] ** 2
    cc, dc, tr = concordance_counts(risk, time, event, w, tau)
    if cc + dc + tr == 0:
        raise MetricError("no comparable pairs")
    return (cc + 0.5 * tr) / (cc + dc + tr)


# --------------------------------------------------------------------------
# Brier scores


def default_tau(time) -> float:
    """Median observation time."""
    return float(np.median(np.asarray(time, dtype=np.float64)))


def _eval_curves(curves: Sequence[StepFunction], t) -> np.ndarray:
    """``curves[i](t[i])`` (or at a common scalar ``t``), one call per distinct curve."""
    n = len(curves)
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))
    out = np.empty(n)
    groups: dict[int, list] = {}
    for i, c in enumerate(curves):
        groups.setdefault(id(c), []).append(i)
    for members in groups.values():
        members = np.asarray(members)
        out[members] = curves[members[0]](t[members])
    return out


def brier_point(curves: Sequence[StepFunction], time, event, tau: Optional[float] = None) -> float:
    """Mean squared error of ``S_i(tau)`` over observations with known status."""
    time = np.asarray(time, dtype=np.float64)
    event = np.asarray(event)
    tau = default_tau(time) if tau is None else float(tau)
    keep = (time >= tau) | (event > 0)
    if not keep.any():
        raise MetricError("no evaluable observations at tau")
    s = _eval_curves([c for c, k in zip(curves, keep) if k], tau)
    alive = (time[keep] > tau).astype(np.float64)
    return float(np.mean((s - alive) ** 2))


def brier_point_ratio(tree_curves, null_curves, time, event, tau: Optional[float] = None) -> float:
    null = brier_point(null_curves, time, event, tau)
    if null <= 0:
        raise MetricError("degenerate null Brier score")
    return 1.0 - brier_point(tree_curves, time, event, tau) / null


def _step_integral(breaks: np.ndarray, heights: np.ndarray):
    """Cumulative integral of the step function ``heights[k]`` on
    ``[breaks[k], breaks[k+1])``; returns an evaluator for any ``t``."""
    cum = np.concatenate(([0.0], np.cumsum(heights[:-1] * np.diff(breaks))))

    def at(t):
        k = np.clip(np.searchsorted(breaks, t, side="right") - 1, 0, breaks.size - 1)
        return cum[k] + heights[k] * (t - breaks[k])

    return at


def integrated_brier(curves: Sequence[StepFunction], time, event, G: Optional[StepFunction] = None) -> float:
    """Integrated Brier score with inverse-probability-of-censoring weights.

    ``IB = 1/(n t_max) sum_i [ int_0^{t_i} (1 - S_i)^2 / G dt
    + delta_i int_{t_i}^{t_max} S_i^2 / G(t_i) dt ]``. Both curves are step
    functions, so the integrals are exact finite sums; ``G`` is floored at
    ``1e-6``.
    """
    time = np.asarray(time, dtype=np.float64)
    event = np.asarray(event)
    t_max = float(time.max())
    if t_max <= 0:
        raise MetricError("degenerate time range")
    if G is None:
        G = censoring_km(time, event)
    n = time.size
    total = 0.0
    groups: dict[int, list] = {}
    for i, c in enumerate(curves):
        groups.setdefault(id(c), []).append(i)
    g_at_t = np.maximum(np.asarray(G(time), dtype=np.float64), G_FLOOR)
    for members in groups.values():
        members = np.asarray(members)
        S = curves[members[0]]
        breaks = np.unique(np.concatenate(([0.0, t_max], S.knots, G.knots)))
        breaks = breaks[(breaks >= 0) & (breaks <= t_max)]
        s_val = np.asarray(S(breaks), dtype=np.float64)
        g_val = np.maximum(np.asarray(G(breaks), dtype=np.float64), G_FLOOR)
        alive_part = _step_integral(breaks, (1.0 - s_val) ** 2 / g_val)
        dead_part = _step_integral(breaks, s_val ** 2)
        ti = time[members]
        di = (event[members] > 0).astype(np.float64)
        total += float(np.sum(alive_part(ti) + di * (dead_part(t_max) - dead_part(ti)) / g_at_t[members]))
    return total / (n * t_max)


def integrated_brier_ratio(tree_curves, null_curves, time, event, G: Optional[StepFunction] = None) -> float:
    null = integrated_brier(null_curves, time, event, G)
    if null <= 0:
        raise MetricError("degenerate null IB")
    return 1.0 - integrated_brier(tree_curves, time, event, G) / null


# --------------------------------------------------------------------------
# report

REPORT_COLUMNS = ("cox_score", "csr", "harrell_c", "uno_c", "bp", "bpr", "ib", "ibr", "tau", "t_max")


@dataclass(frozen=True)
class MetricReport:
    cox_score: float
    csr: float
    harrell_c: float
    uno_c: float
    bp: float
    bpr: float
    ib: float
    ibr: float
    tau: float
    t_max: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_csv(self) -> str:
        row = ",".join(repr(float(getattr(self, c))) for c in REPORT_COLUMNS)
        return ",".join(REPORT_COLUMNS) + "\n" + row + "\n"


def evaluate(tree, data: Dataset, tau: Optional[float] = None) -> MetricReport:
    """Full metric report of a fitted tree on ``data``.

    The null tree's curve is the pooled Kaplan-Meier curve stored with the
    tree at training time (falling back to the evaluation data's own).
    """
    time, event = data.time, data.event
    tau = default_tau(time) if tau is None else float(tau)
    assignment = RiskAssignment.from_tree(tree, data.X)
    curves = [tree.nodes[k].curve for k in assignment.leaf]
    null_curve = tree.null_curve if tree.null_curve is not None else kaplan_meier(time, event)
    null_curves = [null_curve] * data.n
    G = censoring_km(time, event)

    cs = cox_score(assignment, time, event)
    cs0 = cox_score(RiskAssignment.null(data.n), time, event)
    bp = brier_point(curves, time, event, tau)
    bp0 = brier_point(null_curves, time, event, tau)
    ib = integrated_brier(curves, time, event, G)
    ib0 = integrated_brier(null_curves, time, event, G)
    return MetricReport(
        cox_score=cs,
        csr=1.0 - cs / cs0 if cs0 != 0 else 0.0,
        harrell_c=harrell_c(assignment, time, event),
        uno_c=uno_c(assignment, time, event, tau, G),
        bp=bp,
        bpr=1.0 - bp / bp0 if bp0 > 0 else 0.0,
        ib=ib,
        ibr=1.0 - ib / ib0 if ib0 > 0 else 0.0,
        tau=tau,
        t_max=float(time.max()),
    )
