"""Acceptance criteria 1-8.

Every test prints one ``criterion N: PASS|FAIL`` line (visible without
``-s``) and then asserts. Criterion 7 is the long desk-scale simulation
(about 25 minutes on one core); deselect it with ``-m "not slow"``.
"""

import hashlib
import json
import math
import time

import numpy as np
import pytest

from optsurv.metrics import brier_point, harrell_c, integrated_brier, uno_c
from optsurv.search import TrainParams, greedy_grow, train
from optsurv.sim import (
    ParametricDistribution,
    SimConfig,
    apply_censoring,
    area_between_curves,
    assign_distributions,
    calibrate_kappa,
    class_recovery,
    contingency,
    curve_abc,
    generate_covariates,
    generate_truth_tree,
    node_homogeneity,
    record_line,
    run_simulation,
    sample_truth,
)
from optsurv.survival_core import Dataset, StepFunction, censoring_km, from_arrays, kaplan_meier, nelson_aalen
from optsurv.tree_model import (
    Split,
    SplitRule,
    build_tree,
    fit_leaf_coefficient,
    node_error,
    objective,
    tree_error,
)

from . import oracles

# restarts for criterion 3 (the floor is 20); rotated optima such as
# "x1 then x0 on the left" vs "x0 then x1 on the right" are not joined by any
# single improving move, so each start reaches them with low probability
C3_RESTARTS = 100
# desk-scale simulation settings for criterion 7
C7_SEEDS = range(1, 51)
C7_BASE = dict(n_total=3000, n_test=1000, censoring=0.35, min_depth=3, max_depth=4,
               restarts=5, depth_grid=[2, 3, 4, 5], alpha_points=12, folds=5)
C7_SIZES = (100, 500, 1000, 2000)
# criterion 8 replays this many criterion-7 seeds per size
C8_REPLAY = 2

_DIGESTS = {}
_RECORDS = {}


def report(capsys, number, ok, detail, elapsed):
    with capsys.disabled():
        print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} ({detail}; {elapsed:.1f}s)")


def digest(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def random_outcomes(rng, n):
    time = rng.choice(np.round(rng.exponential(2.0, 12), 3), size=n)
    event = rng.integers(0, 2, n)
    return time, event


# ------------------------------------------------------------------ criteria


def criterion_1():
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(200):
        time, event = random_outcomes(rng, int(rng.integers(1, 51)))
        na, km, g = nelson_aalen(time, event), kaplan_meier(time, event), censoring_km(time, event)
        probes = np.unique(np.concatenate([time, time + 0.01, [0.0]]))
        for t in probes:
            worst = max(worst,
                        abs(na(t) - oracles.nelson_aalen(time, event, t)),
                        abs(km(t) - oracles.kaplan_meier(time, event, t)),
                        abs(g(t) - oracles.censoring_km(time, event, t)))
    return {"max_abs_diff": worst}, worst <= 1e-12, f"max |diff| = {worst:.1e}"


def _random_leaf_data(rng):
    n = int(rng.integers(2, 40))
    s = rng.exponential(1.0, n)
    c = rng.exponential(1.5, n)
    return from_arrays(rng.uniform(size=(n, 2)), np.minimum(s, c), (s <= c).astype(int))


def criterion_2():
    rng = np.random.default_rng(202)
    saturated = []
    for _ in range(50):
        n = int(rng.integers(1, 30))
        s = rng.exponential(1.0, n)
        c = rng.exponential(1.5, n)
        ds = from_arrays(np.arange(float(n)).reshape(-1, 1), np.minimum(s, c), (s <= c).astype(int))

        def chain(lo, hi):
            if hi - lo == 1:
                return None
            mid = (lo + hi) // 2
            return Split(SplitRule(0, threshold=mid - 0.5), chain(lo, mid), chain(mid, hi))

        saturated.append(tree_error(build_tree(chain(0, n), ds), ds))
    leaf_errors, gaps = [], []
    for _ in range(200):
        ds = _random_leaf_data(rng)
        lam = nelson_aalen(ds.time, ds.event)(ds.time)
        leaf_errors.append(node_error(lam, ds.event, fit_leaf_coefficient(lam, ds.event)))
        left = rng.uniform(size=ds.n) < 0.5
        if left.all() or not left.any():
            left[0] = not left[0]
        parent = node_error(lam, ds.event, fit_leaf_coefficient(lam, ds.event))
        kids = sum(node_error(lam[m], ds.event[m], fit_leaf_coefficient(lam[m], ds.event[m])) for m in (left, ~left))
        gaps.append(parent - kids)
    ok = all(e == 0.0 for e in saturated) and min(leaf_errors) >= 0 and min(gaps) >= -1e-12
    result = {"saturated": saturated, "min_leaf": min(leaf_errors), "min_gap": min(gaps)}
    return result, ok, (f"saturated max {max(saturated)!r}, min node error {min(leaf_errors):.2e}, "
                        f"min refinement gain {min(gaps):.2e}")


def criterion_3():
    rng = np.random.default_rng(303)
    matched, worse_than_greedy, gaps = 0, 0, []
    for _ in range(100):
        n = int(rng.integers(20, 41))
        X = np.column_stack([rng.integers(0, 7, n), rng.integers(0, 7, n)]).astype(float)
        rate = np.exp(0.25 * X[:, 0] - 0.2 * X[:, 1] + 0.6 * (X[:, 1] > 3))
        s = rng.exponential(1.0 / rate)
        c = rng.exponential(3.0, n)
        ds = from_arrays(X, np.round(np.minimum(s, c), 6), (s <= c).astype(int))
        alpha = float(rng.uniform(0.0, 1.5))
        # two levels of splits below the root: max_depth 3 with the root at depth 1
        params = TrainParams(max_depth=3, min_bucket=3, restarts=C3_RESTARTS, alpha=alpha, seed=int(rng.integers(10 ** 6)))
        tree, _ = train(ds, params)
        best = oracles.best_objective(X, list(ds.time), list(ds.event), alpha, 3, split_levels=2)
        got = objective(tree, ds, alpha)
        gaps.append(got - best)
        matched += abs(got - best) <= 1e-9
        worse_than_greedy += got > objective(greedy_grow(ds, params), ds, alpha) + 1e-9
    ok = matched >= 95 and worse_than_greedy == 0
    return ({"matched": matched, "worse": worse_than_greedy, "gaps": gaps}, ok,
            f"{matched}/100 at global optimum, {worse_than_greedy} worse than greedy")


def criterion_4():
    rng = np.random.default_rng(404)
    worst = 0.0
    checked = 0
    while checked < 100:
        n = int(rng.integers(5, 31))
        time, event = random_outcomes(rng, n)
        event[0] = 1
        risk = rng.integers(0, 4, n).astype(float)
        tau = float(np.median(time))
        if not any(time[i] > time[j] and event[j] == 1 and time[j] < tau for i in range(n) for j in range(n)):
            continue
        if min(oracles.censoring_km(time, event, t) for t in time[event == 1]) <= 0:
            continue
        if not np.any((time >= tau) | (event == 1)) or time.max() <= 0:
            continue
        km = kaplan_meier(time, event)
        alt = StepFunction([0.5, 1.5, 3.0], [0.8, 0.4, 0.1], 1.0)
        curves = [km if r < 2 else alt for r in risk]
        worst = max(
            worst,
            abs(harrell_c(risk, time, event) - oracles.harrell(risk, time, event)),
            abs(uno_c(risk, time, event, tau) - oracles.uno(risk, time, event, tau)),
            abs(brier_point(curves, time, event, tau)
                - oracles.brier_point([c(tau) for c in curves], time, event, tau)),
            abs(integrated_brier(curves, time, event) - oracles.integrated_brier(curves, time, event)),
        )
        checked += 1
    tied = harrell_c(np.ones(25), rng.exponential(size=25), np.ones(25))
    big = 10000
    hc_random = harrell_c(rng.uniform(size=big), rng.exponential(size=big), rng.integers(0, 2, big))
    ok = worst <= 1e-9 and tied == 0.5 and 0.48 <= hc_random <= 0.52
    return ({"worst": worst, "tied": tied, "random": hc_random}, ok,
            f"max |diff| = {worst:.1e}, tied H_C = {tied}, random H_C = {hc_random:.4f}")


def criterion_5():
    rng = np.random.default_rng(505)
    X = generate_covariates(500, rng)
    n = X.values.shape[0]
    duality = 0
    for _ in range(100):
        a = generate_truth_tree(X, int(rng.integers(5, 60)), 4, 1, rng)
        b = generate_truth_tree(X, int(rng.integers(5, 60)), 4, 1, rng)
        duality += node_homogeneity(contingency(a, b, X)) == class_recovery(contingency(b, a, X))
    truth = assign_distributions(generate_truth_tree(X, 25, 4, 3, rng), rng)
    nh_sat = node_homogeneity(contingency(np.arange(n), truth, X))
    cr_null = class_recovery(contingency(None, truth, X))
    s = sample_truth(truth, X, rng)
    t, d = apply_censoring(s, calibrate_kappa(s, 0.3), rng)
    data = Dataset(X, t, d)
    _, ar_null = area_between_curves(greedy_grow(data, TrainParams(max_depth=1, alpha=0.0)), truth, data)
    abc = curve_abc(ParametricDistribution("exponential", (1.0,)), StepFunction([], [], 1.0), 1.0)
    ok = duality == 100 and nh_sat == 1.0 and cr_null == 1.0 and ar_null == 0.0 and abs(abc - math.exp(-1)) <= 1e-6
    return ({"duality": duality, "nh_sat": nh_sat, "cr_null": cr_null, "ar_null": ar_null, "abc": abc}, ok,
            f"duality {duality}/100, NH(sat)={nh_sat}, CR(null)={cr_null}, AR(null)={ar_null}, ABC={abc:.10f}")


def criterion_6():
    rng = np.random.default_rng(606)
    X = generate_covariates(20000, rng)
    truth = assign_distributions(generate_truth_tree(X, 1000, 4, 3, rng), rng)
    s = sample_truth(truth, X, rng)
    fit_s, fresh_s = s[:10000], s[10000:]
    realized = {}
    for target in (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8):
        kappa = calibrate_kappa(fit_s, target)
        _, d = apply_censoring(fresh_s, kappa, rng)
        realized[target] = float(1.0 - d.mean())
    worst = max(abs(r - t) for t, r in realized.items())
    return realized, worst <= 0.02, f"max |realized - target| = {worst:.4f}"


def _c7_records(sizes=C7_SIZES, seeds=C7_SEEDS):
    out = {}
    for n_train in sizes:
        out[n_train] = [run_simulation(SimConfig.from_dict(dict(C7_BASE, n_train=n_train, seed=s))) for s in seeds]
    return out


def _mean(records, model, key):
    return float(np.mean([r["models"][model][key] for r in records]))


def criterion_7():
    records = _c7_records()
    _RECORDS.update(records)
    main = records[1000]
    nh = {m: _mean(main, m, "nh") for m in ("ost", "greedy")}
    cr = {m: _mean(main, m, "cr") for m in ("ost", "greedy")}
    ar = _mean(main, "ost", "ar")
    trend = {n: _mean(records[n], "ost", "nh") for n in (100, 500, 2000)}
    cens = float(np.mean([r["censoring_realized"] for r in main]))
    a = nh["ost"] > nh["greedy"] and cr["ost"] > cr["greedy"]
    b = 0.45 <= ar <= 0.75
    c = trend[100] < trend[500] < trend[2000]
    result = {"nh": nh, "cr": cr, "ar": ar, "trend": trend, "censoring": cens,
              "greedy_ar": _mean(main, "greedy", "ar"),
              "greedy_trend": {n: _mean(records[n], "greedy", "nh") for n in (100, 500, 2000)}}
    detail = (f"(a) NH {nh['ost']:.4f} vs {nh['greedy']:.4f}, CR {cr['ost']:.4f} vs {cr['greedy']:.4f} "
              f"{'ok' if a else 'FAIL'}; (b) AR {ar:.4f} {'ok' if b else 'FAIL'}; "
              f"(c) NH {trend[100]:.4f} < {trend[500]:.4f} < {trend[2000]:.4f} {'ok' if c else 'FAIL'}; "
              f"censoring {cens:.3f}")
    return result, a and b and c, detail


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6}
BUDGET = {1: 5, 2: 5, 3: 120, 4: 60, 5: None, 6: 30}


# ------------------------------------------------------------------ tests


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    start = time.perf_counter()
    result, ok, detail = CRITERIA[number]()
    elapsed = time.perf_counter() - start
    _DIGESTS[number] = digest(result)
    limit = BUDGET[number]
    in_time = limit is None or elapsed < limit
    report(capsys, number, ok and in_time, detail + ("" if in_time else f", over {limit}s budget"), elapsed)
    assert ok, detail
    assert in_time, f"took {elapsed:.1f}s, budget {limit}s"


@pytest.mark.slow
def test_criterion_7(capsys):
    start = time.perf_counter()
    result, ok, detail = criterion_7()
    elapsed = time.perf_counter() - start
    in_time = elapsed < 30 * 60
    report(capsys, 7, ok and in_time, detail + ("" if in_time else ", over 30 min budget"), elapsed)
    with open("acceptance_c7.json", "w") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
    assert ok, detail
    assert in_time, f"took {elapsed:.1f}s"


def test_criterion_8(capsys):
    start = time.perf_counter()
    mismatched = []
    for number, fn in CRITERIA.items():
        if number not in _DIGESTS:
            _DIGESTS[number] = digest(fn()[0])
        if digest(fn()[0]) != _DIGESTS[number]:
            mismatched.append(number)
    # replay a few criterion-7 seeds per size (the full set when 7 did not run)
    seeds = list(C7_SEEDS)[:C8_REPLAY]
    replay = _c7_records(seeds=seeds)
    for n_train, recs in replay.items():
        first = _RECORDS.get(n_train, [None] * len(seeds))[: len(seeds)]
        if first[0] is None:
            first = _c7_records(sizes=(n_train,), seeds=seeds)[n_train]
        if [record_line(r) for r in recs] != [record_line(r) for r in first]:
            mismatched.append(f"7@{n_train}")
    ok = not mismatched
    elapsed = time.perf_counter() - start
    report(capsys, 8, ok, f"criteria 1-6 and {len(seeds)} seeds x {len(C7_SIZES)} sizes of 7 re-run; "
                          f"mismatches: {mismatched or 'none'}", elapsed)
    assert ok
