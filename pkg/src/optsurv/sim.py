"""Simulation pipeline with a known ground-truth tree, and the metrics that
need that truth (node homogeneity, class recovery, similarity, area ratio).

A run draws six covariates (three U[0,1], three discrete uniform with 2, 3
and 5 levels), grows a random truth tree, attaches a parametric survival
distribution to each of its leaves, samples survival times, censors them at
``kappa (1 - u^2)`` with ``kappa`` tuned to a target censoring rate, then
trains and scores the coordinate-descent and greedy trainers.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import special

from .metrics import evaluate
from .search import TrainParams, alpha_grid, cross_validate, fit_with
from .survival_core import CovariateMatrix, Dataset, Feature, StepFunction
from .tree_model import Split, SplitRule, Structure, apply_structure, count_splits, structure_depth

__all__ = [
    "SimError",
    "ParametricDistribution",
    "DISTRIBUTIONS",
    "TruthModel",
    "SimConfig",
    "ContingencyTable",
    "generate_covariates",
    "generate_truth_tree",
    "assign_distributions",
    "sample_survival",
    "apply_censoring",
    "censoring_rate",
    "calibrate_kappa",
    "add_noise",
    "contingency",
    "node_homogeneity",
    "class_recovery",
    "similarity",
    "abc_segment_integral",
    "area_between_curves",
    "run_simulation",
]


class SimError(ValueError):
    pass


# --------------------------------------------------------------------------
# distributions


@dataclass(frozen=True)
class ParametricDistribution:
    """One of the four leaf survival families.

    Parameter conventions: exponential(rate), weibull(shape k, scale lambda),
    lognormal(mu, sigma^2) on the log scale, gamma(shape k, scale theta).
    """

    family: str
    params: tuple

    def __post_init__(self):
        if self.family not in ("exponential", "weibull", "lognormal", "gamma"):
            raise SimError(f"unknown family {self.family!r}")
        if any(p <= 0 for p in self.params):
            raise SimError("distribution parameters must be positive")

    def sample(self, rng, size=None):
        f, p = self.family, self.params
        if f == "exponential":
            x = rng.exponential(1.0 / p[0], size)
        elif f == "weibull":
            x = p[1] * rng.weibull(p[0], size)
        elif f == "lognormal":
            x = rng.lognormal(p[0], math.sqrt(p[1]), size)
        else:
            x = rng.gamma(p[0], p[1], size)
        # tiny gamma shapes can underflow to exactly zero
        return np.maximum(x, np.finfo(np.float64).tiny)

    def sf(self, t):
        t = np.asarray(t, dtype=np.float64)
        f, p = self.family, self.params
        if f == "exponential":
            return np.exp(-p[0] * t)
        if f == "weibull":
            return np.exp(-((t / p[1]) ** p[0]))
        if f == "lognormal":
            with np.errstate(divide="ignore"):
                z = (np.log(t) - p[0]) / math.sqrt(p[1])
            return special.ndtr(-z)
        return special.gammaincc(p[0], t / p[1])

    def cdf(self, t):
        return 1.0 - self.sf(t)

    def isf(self, q):
        """Time at which the survival function equals ``q``."""
        q = np.asarray(q, dtype=np.float64)
        f, p = self.family, self.params
        with np.errstate(divide="ignore"):
            if f == "exponential":
                t = -np.log(q) / p[0]
            elif f == "weibull":
                t = p[1] * (-np.log(q)) ** (1.0 / p[0])
            elif f == "lognormal":
                t = np.exp(p[0] - math.sqrt(p[1]) * special.ndtri(q))
            else:
                t = p[1] * special.gammainccinv(p[0], q)
        t = np.where(q >= 1.0, 0.0, np.where(q <= 0.0, np.inf, t))
        return t if t.ndim else float(t)

    def sf_integral(self, a, b):
        """``int_a^b S(t) dt`` in closed form (elementwise, zero when b <= a)."""
        a = np.asarray(a, dtype=np.float64)
        b = np.maximum(np.asarray(b, dtype=np.float64), a)
        f, p = self.family, self.params
        if f == "exponential":
            r = p[0]
            out = (np.exp(-r * a) - np.exp(-r * b)) / r
        elif f == "weibull":
            k, lam = p
            s = 1.0 / k
            out = lam * math.gamma(1.0 + s) * (
                special.gammainc(s, (b / lam) ** k) - special.gammainc(s, (a / lam) ** k))
        else:
            # int_a^b S = [t S(t)]_a^b + int_a^b t f(t) dt
            edge = b * self.sf(b) - a * self.sf(a)
            if f == "lognormal":
                mu, var = p
                sig = math.sqrt(var)
                with np.errstate(divide="ignore"):
                    hi = special.ndtr((np.log(b) - mu - var) / sig)
                    lo = special.ndtr((np.log(a) - mu - var) / sig)
                out = edge + math.exp(mu + var / 2.0) * (hi - lo)
            else:
                k, th = p
                out = edge + k * th * (special.gammainc(k + 1.0, b / th) - special.gammainc(k + 1.0, a / th))
        return out if out.ndim else float(out)

    def to_dict(self) -> dict:
        return {"family": self.family, "params": list(self.params)}


DISTRIBUTIONS: tuple = tuple(
    [ParametricDistribution("exponential", (v,)) for v in (0.3, 0.4, 0.6, 0.8, 0.9, 1.15, 1.5, 1.8)]
    + [ParametricDistribution("weibull", p) for p in (
        (0.8, 0.4), (0.9, 0.5), (0.9, 0.7), (0.9, 1.1), (0.9, 1.5), (1.0, 1.1), (1.0, 1.9), (1.3, 0.5))]
    + [ParametricDistribution("lognormal", p) for p in (
        (0.1, 1.0), (0.2, 0.75), (0.3, 0.3), (0.3, 0.5), (0.3, 0.8), (0.4, 0.32), (0.5, 0.3), (0.5, 0.7))]
    + [ParametricDistribution("gamma", p) for p in (
        (0.2, 0.75), (0.3, 1.3), (0.3, 2.0), (0.5, 1.5), (0.8, 1.0), (0.9, 1.3), (1.4, 0.9), (1.5, 0.7))]
)


@dataclass(frozen=True)
class TruthModel:
    """Ground-truth tree; leaves are keyed by their preorder node id."""

    structure: Structure
    leaf_distributions: Mapping[int, ParametricDistribution]

    def apply(self, X) -> np.ndarray:
        X = X.values if isinstance(X, CovariateMatrix) else X
        return apply_structure(self.structure, X)

    @property
    def depth(self) -> int:
        return structure_depth(self.structure)

    @property
    def n_leaves(self) -> int:
        return count_splits(self.structure) + 1


# --------------------------------------------------------------------------
# data generation

LEVEL_COUNTS = (2, 3, 5)


def _discretize(u: np.ndarray, levels: int) -> np.ndarray:
    return np.clip(np.floor(u * levels), 0, levels - 1)


def covariate_features() -> tuple:
    cont = [Feature(f"x{j}") for j in (1, 2, 3)]
    cat = [
        Feature(f"x{4 + i}", "categorical", tuple(str(k) for k in range(L)), True)
        for i, L in enumerate(LEVEL_COUNTS)
    ]
    return tuple(cont + cat)


def generate_covariates(n: int, rng) -> CovariateMatrix:
    """Three U[0,1] columns and three discrete uniform columns (2, 3, 5 levels).

    Discrete columns are floors of latent uniforms, which are kept in
    ``latent`` so :func:`add_noise` can perturb and re-round them.
    """
    if n < 1:
        raise SimError("n must be >= 1")
    latent = rng.uniform(size=(n, 6))
    values = latent.copy()
    for i, L in enumerate(LEVEL_COUNTS):
        values[:, 3 + i] = _discretize(latent[:, 3 + i], L)
    return CovariateMatrix(values, covariate_features(), latent)


def generate_truth_tree(X, min_bucket: int, max_depth: int, min_depth: int, rng,
                        max_attempts: int = 1000) -> Structure:
    """Random tree via the open-node growing procedure.

    The lowest-numbered open node is processed next. Features are tried in a
    random permutation of ``p + 1`` slots, where the extra slot (or reaching
    ``max_depth``) closes the node. For a feature, distinct values are tried
    as thresholds ``x <= b`` in random order and the first one leaving
    ``min_bucket`` on both sides splits the node. Trees shallower than
    ``min_depth`` are discarded and regrown.
    """
    X = X.values if isinstance(X, CovariateMatrix) else np.asarray(X, dtype=np.float64)
    if min_bucket < 1 or not (max_depth >= min_depth >= 1):
        raise SimError("need min_bucket >= 1 and max_depth >= min_depth >= 1")
    n, p = X.shape
    for _ in range(max_attempts):
        pop = {0: np.arange(n)}
        depth = {0: 1}
        children: dict[int, tuple] = {}
        is_open = {0: True}
        while True:
            open_ids = [k for k, o in is_open.items() if o]
            if not open_ids:
                break
            k = min(open_ids)
            xs_node = X[pop[k]]
            for j in rng.permutation(p + 1):
                if j == p or depth[k] == max_depth:
                    is_open[k] = False
                    break
                col = xs_node[:, j]
                cand = rng.permutation(np.unique(col))
                sorted_col = np.sort(col)
                n_left = np.searchsorted(sorted_col, cand, side="right")
                ok = np.flatnonzero((n_left >= min_bucket) & (col.size - n_left >= min_bucket))
                if ok.size:
                    b = float(cand[ok[0]])
                    left = col <= b
                    a, c = len(depth), len(depth) + 1
                    pop[a], pop[c] = pop[k][left], pop[k][~left]
                    depth[a] = depth[c] = depth[k] + 1
                    is_open[a] = is_open[c] = True
                    children[k] = (int(j), b, a, c)
                    is_open[k] = False
                    break
        if max(depth.values()) >= min_depth:
            def build(k):
                if k not in children:
                    return None
                j, b, a, c = children[k]
                return Split(SplitRule(j, threshold=b), build(a), build(c))

            return build(0)
    raise SimError("infeasible truth-tree config")


def _leaf_ids(struct: Structure) -> list[int]:
    out = []
    counter = [0]

    def walk(node):
        my = counter[0]
        counter[0] += 1
        if node is None:
            out.append(my)
            return
        walk(node.left)
        walk(node.right)

    walk(struct)
    return out


def assign_distributions(struct: Structure, rng) -> TruthModel:
    """Give every leaf an independent uniform draw from the 32 distributions."""
    leaves = _leaf_ids(struct)
    picks = rng.integers(len(DISTRIBUTIONS), size=len(leaves))
    return TruthModel(struct, {k: DISTRIBUTIONS[int(i)] for k, i in zip(leaves, picks)})


def sample_survival(dist: ParametricDistribution, rng, size=None):
    return dist.sample(rng, size)


def sample_truth(truth: TruthModel, X, rng) -> np.ndarray:
    """Survival time for every row, drawn from its truth leaf's distribution."""
    classes = truth.apply(X)
    s = np.empty(classes.size)
    for k in sorted(truth.leaf_distributions):
        m = classes == k
        if m.any():
            s[m] = truth.leaf_distributions[k].sample(rng, int(m.sum()))
    return s


def apply_censoring(s, kappa: float, rng):
    """``c = kappa (1 - u^2)``, ``t = min(s, c)``, ``delta = 1{s <= c}``.

    ``kappa = inf`` disables censoring.
    """
    s = np.asarray(s, dtype=np.float64)
    if kappa < 0:
        raise SimError("kappa must be >= 0")
    if math.isinf(kappa):
        return s.copy(), np.ones(s.shape, dtype=np.int8)
    u = rng.uniform(size=s.shape)
    c = kappa * (1.0 - u ** 2)
    dead = s <= c
    return np.where(dead, s, c), dead.astype(np.int8)


def censoring_rate(s, kappa: float) -> float:
    """Expected censored fraction of the sample ``s`` at ``kappa``.

    Averages ``P(kappa (1 - u^2) < s_i) = 1 - sqrt(1 - s_i / kappa)`` exactly
    over ``u`` instead of drawing it.
    """
    s = np.asarray(s, dtype=np.float64)
    if math.isinf(kappa):
        return 0.0
    if kappa <= 0:
        return 1.0
    r = np.minimum(s / kappa, 1.0)
    return float(np.mean(1.0 - np.sqrt(1.0 - r)))


def calibrate_kappa(s, target: float, tol: float = 0.01) -> float:
    """``kappa`` whose censoring rate on ``s`` matches ``target``.

    Bisection in ``log kappa``; the rate is nonincreasing in ``kappa``.
    ``target = 0`` returns ``inf`` (censoring disabled).
    """
    if not 0.0 <= target <= 0.95:
        raise SimError("censoring target must lie in [0, 0.95]")
    if target == 0:
        return math.inf
    s = np.asarray(s, dtype=np.float64)
    hi = float(np.max(s)) * 2.0
    while censoring_rate(s, hi) > target:
        hi *= 2.0
    lo = hi
    while censoring_rate(s, lo) < target:
        lo *= 0.5
        if lo < 1e-300:
            raise SimError("cannot reach censoring target")
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if censoring_rate(s, mid) > target:
            lo = mid
        else:
            hi = mid
        if hi / lo - 1.0 < 1e-14:
            break
    kappa = hi
    if abs(censoring_rate(s, kappa) - target) > tol:
        # a few very large atoms in s can leave a jump; take the closer end
        kappa = min((lo, hi), key=lambda k: abs(censoring_rate(s, k) - target))
    return kappa


def add_noise(X: CovariateMatrix, level: float, rng) -> CovariateMatrix:
    """Perturb every latent covariate by ``U(-level, level)`` and re-round the
    discrete columns. Only apply to training rows."""
    if level not in (0.05, 0.10, 0.1):
        raise SimError("unsupported noise level")
    if X.latent is None:
        raise SimError("noise needs the latent covariate values")
    noisy = X.latent + rng.uniform(-level, level, size=X.latent.shape)
    values = noisy.copy()
    for j, f in enumerate(X.features):
        if f.is_categorical:
            values[:, j] = _discretize(noisy[:, j], f.level_count)
    return CovariateMatrix(values, X.features, noisy)


# --------------------------------------------------------------------------
# classification accuracy


@dataclass(frozen=True)
class ContingencyTable:
    """``counts[k, l]``: observations in empirical node ``rows[k]`` and true
    class ``cols[l]``."""

    counts: np.ndarray
    rows: tuple
    cols: tuple

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def transpose(self) -> "ContingencyTable":
        return ContingencyTable(self.counts.T.copy(), self.cols, self.rows)


def _ids(model, X) -> np.ndarray:
    if isinstance(model, np.ndarray):
        return model
    if model is None or isinstance(model, Split):
        return apply_structure(model, X)
    return model.apply(X)


def contingency(T, C, X) -> ContingencyTable:
    """Cross-tabulate leaf membership under ``T`` against ``C``.

    ``T`` and ``C`` are anything with ``apply(X)`` (fitted trees, truth
    models), nested structures, or precomputed leaf-id arrays.
    """
    X = X.values if isinstance(X, CovariateMatrix) else X
    a, b = _ids(T, X), _ids(C, X)
    if a.shape != b.shape:
        raise SimError("schema mismatch: trees route different row counts")
    rows, ai = np.unique(a, return_inverse=True)
    cols, bi = np.unique(b, return_inverse=True)
    counts = np.zeros((rows.size, cols.size), dtype=np.int64)
    np.add.at(counts, (ai, bi), 1)
    return ContingencyTable(counts, tuple(rows.tolist()), tuple(cols.tolist()))


def _row_purity(counts: np.ndarray) -> float:
    # fixed memory order keeps NH(T1 rel T2) == CR(T2 rel T1) bit-for-bit
    c = np.array(counts, dtype=np.float64, order="C")
    n = c.sum()
    if n <= 0:
        raise SimError("empty contingency table")
    return float(np.sum(c * (c / c.sum(axis=1, keepdims=True))) / n)


def node_homogeneity(table: ContingencyTable) -> float:
    """``(1/n) sum_k sum_l n_kl * n_kl / n_k.``"""
    return _row_purity(table.counts)


def class_recovery(table: ContingencyTable) -> float:
    """``(1/n) sum_l sum_k n_kl * n_kl / n_.l``"""
    return _row_purity(table.counts.T)


def similarity(T1, T2, X) -> float:
    """Mean of the two node-homogeneity scores of ``T1`` and ``T2`` relative
    to each other (symmetric)."""
    tab = contingency(T1, T2, X)
    return 0.5 * (node_homogeneity(tab) + node_homogeneity(tab.transpose()))


# --------------------------------------------------------------------------
# prediction accuracy


def abc_segment_integral(dist: ParametricDistribution, level, a, b):
    """``int_a^b |S(t) - level| dt`` for the true survival function ``S``.

    ``S`` is decreasing, so it crosses ``level`` at most once, at
    ``S^{-1}(level)``; the integral splits there. Vectorised over segments.
    """
    level = np.asarray(level, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.maximum(np.asarray(b, dtype=np.float64), a)
    cross = np.clip(dist.isf(level), a, b)
    above = dist.sf_integral(a, cross) - level * (cross - a)
    below = level * (b - cross) - dist.sf_integral(cross, b)
    out = above + below
    return out if out.ndim else float(out)


def curve_abc(dist: ParametricDistribution, curve: StepFunction, t_max: float) -> float:
    """``(1/t_max) int_0^t_max |S_true - S_hat|`` for one step curve."""
    knots = curve.knots[(curve.knots > 0) & (curve.knots < t_max)]
    breaks = np.concatenate(([0.0], knots, [t_max]))
    levels = np.asarray(curve(breaks[:-1]), dtype=np.float64)
    return float(np.sum(abc_segment_integral(dist, levels, breaks[:-1], breaks[1:]))) / t_max


def area_between_curves(tree, truth: TruthModel, data: Dataset, t_max: Optional[float] = None):
    """Per-observation ABC of ``tree`` and the area ratio against its null tree.

    Returns ``(abc, ar)``; ``t_max`` defaults to the largest observed time in
    ``data``. The null curve is the pooled training Kaplan-Meier curve stored
    with the tree.
    """
    t_max = float(np.max(data.time)) if t_max is None else float(t_max)
    if t_max <= 0:
        raise SimError("degenerate horizon")
    leaves = tree.apply(data.X)
    classes = truth.apply(data.X)
    abc = np.empty(leaves.size)
    abc0 = np.empty(leaves.size)
    null = {}
    pairs = {}
    for i, (k, l) in enumerate(zip(leaves.tolist(), classes.tolist())):
        if (k, l) not in pairs:
            pairs[(k, l)] = curve_abc(truth.leaf_distributions[l], tree.nodes[k].curve, t_max)
        if l not in null:
            null[l] = curve_abc(truth.leaf_distributions[l], tree.null_curve, t_max)
        abc[i] = pairs[(k, l)]
        abc0[i] = null[l]
    denom = abc0.sum()
    ar = 1.0 - abc.sum() / denom if denom > 0 else 0.0
    return abc, ar


# --------------------------------------------------------------------------
# experiment driver


@dataclass
class SimConfig:
    n_total: int = 20000
    n_test: int = 10000
    n_train: Optional[int] = None
    min_depth: int = 3
    max_depth: int = 4
    truth_min_bucket: Optional[int] = None
    censoring: float = 0.0
    noise: float = 0.0
    seed: int = 0
    # trainer settings
    min_bucket: int = 5
    restarts: int = 10
    folds: int = 5
    depth_grid: tuple = (2, 3, 4, 5)
    alpha_points: int = 12
    trainers: tuple = ("ost", "greedy")

    def validate(self) -> "SimConfig":
        if self.n_test >= self.n_total:
            raise SimError("n_test must be < n_total")
        if self.train_size > self.n_total - self.n_test or self.train_size < 1:
            raise SimError("n_train must fit in the non-test rows")
        if not 0.0 <= self.censoring < 1.0:
            raise SimError("censoring target must be in [0, 1)")
        if self.noise not in (0.0, 0.05, 0.1):
            raise SimError("unsupported noise level")
        if not set(self.trainers) <= {"ost", "greedy"}:
            raise SimError("unknown trainer")
        return self

    @property
    def train_size(self) -> int:
        return self.n_total - self.n_test if self.n_train is None else int(self.n_train)

    @property
    def truth_bucket(self) -> int:
        if self.truth_min_bucket is not None:
            return int(self.truth_min_bucket)
        return max(1, self.n_total // 20)

    @classmethod
    def from_dict(cls, d: Mapping) -> "SimConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise SimError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("depth_grid", "trainers"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d).validate()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["depth_grid"] = list(self.depth_grid)
        d["trainers"] = list(self.trainers)
        return d


def _score_model(tree, truth: TruthModel, test: Dataset) -> dict:
    report = evaluate(tree, test)
    table = contingency(tree, truth, test.X)
    _, ar = area_between_curves(tree, truth, test)
    return {
        "nh": node_homogeneity(table),
        "cr": class_recovery(table),
        "ar": ar,
        "csr": report.csr,
        "hc": report.harrell_c,
        "uc": report.uno_c,
        "bpr": report.bpr,
        "ibr": report.ibr,
        "n_leaves": tree.n_leaves,
    }


def simulate_dataset(config: SimConfig):
    """Generate the full dataset for ``config``; returns a dict of pieces."""
    config.validate()
    ss = np.random.SeedSequence(config.seed)
    r_cov, r_tree, r_dist, r_surv, r_cens, r_split, r_noise = (np.random.default_rng(s) for s in ss.spawn(7))
    X = generate_covariates(config.n_total, r_cov)
    struct = generate_truth_tree(X, config.truth_bucket, config.max_depth, config.min_depth, r_tree)
    truth = assign_distributions(struct, r_dist)
    s = sample_truth(truth, X, r_surv)
    kappa = calibrate_kappa(s, config.censoring) if config.censoring > 0 else math.inf
    t, d = apply_censoring(s, kappa, r_cens)
    perm = r_split.permutation(config.n_total)
    test_idx = np.sort(perm[: config.n_test])
    train_idx = np.sort(perm[config.n_test: config.n_test + config.train_size])
    train_cov = X.take(train_idx)
    if config.noise:
        train_cov = add_noise(train_cov, config.noise, r_noise)
    train = Dataset(train_cov, t[train_idx], d[train_idx])
    test = Dataset(X.take(test_idx), t[test_idx], d[test_idx])
    return {"truth": truth, "train": train, "test": test, "kappa": kappa,
            "censoring_realized": float(1.0 - d.mean())}


def train_model(train: Dataset, config: SimConfig, trainer: str):
    base = TrainParams(
        max_depth=max(config.depth_grid), min_bucket=config.min_bucket,
        restarts=config.restarts, alpha=0.0, seed=config.seed, folds=config.folds,
    )
    grid = alpha_grid(train, points=config.alpha_points)
    chosen = cross_validate(train, config.depth_grid, grid, config.folds, base, trainer)
    return fit_with(train, chosen, trainer), chosen


def run_simulation(config: SimConfig) -> dict:
    """One complete experiment; the returned record is JSON-serialisable and
    depends only on ``config``."""
    parts = simulate_dataset(config)
    models = {}
    for trainer in config.trainers:
        tree, chosen = train_model(parts["train"], config, trainer)
        scores = _score_model(tree, parts["truth"], parts["test"])
        scores["max_depth"] = chosen.max_depth
        scores["alpha"] = chosen.alpha
        models[trainer] = scores
    kappa = parts["kappa"]
    return {
        "seed": config.seed,
        "config": config.to_dict(),
        "kappa": None if math.isinf(kappa) else kappa,
        "censoring_realized": parts["censoring_realized"],
        "truth": {"depth": parts["truth"].depth, "n_leaves": parts["truth"].n_leaves},
        "models": models,
    }


def record_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True)


SUMMARY_METRICS = ("nh", "cr", "ar", "csr", "hc", "uc", "bpr", "ibr", "n_leaves")


def summarize(records: Sequence[dict]) -> str:
    """CSV of metric means keyed by ``(n_train, censoring, model)``."""
    groups: dict[tuple, list] = {}
    for rec in records:
        cfg = rec["config"]
        n_train = cfg["n_train"] if cfg.get("n_train") is not None else cfg["n_total"] - cfg["n_test"]
        for model, scores in rec["models"].items():
            groups.setdefault((int(n_train), float(cfg["censoring"]), model), []).append(scores)
    lines = ["n_train,censoring,model,runs," + ",".join(SUMMARY_METRICS)]
    for key in sorted(groups):
        rows = groups[key]
        means = [repr(float(np.mean([r[m] for r in rows]))) for m in SUMMARY_METRICS]
        lines.append(f"{key[0]},{key[1]!r},{key[2]},{len(rows)}," + ",".join(means))
    return "\n".join(lines) + "\n"
