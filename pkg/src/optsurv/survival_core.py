"""Right-censored data containers and the nonparametric estimators.

Everything downstream consumes three estimators built here:

* ``nelson_aalen`` -- cumulative hazard, the baseline of the tree model;
* ``kaplan_meier`` -- product-limit survival curve, used for leaf curves;
* ``censoring_km`` -- Kaplan-Meier of the censoring distribution (IPCW).

Ties between a death and a censoring at the same time are resolved by
processing the death first, so the censored subject still counts in the risk
set of the tied death.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "DataError",
    "SurvivalObservation",
    "Feature",
    "CovariateMatrix",
    "Dataset",
    "StepFunction",
    "IngestConfig",
    "nelson_aalen",
    "kaplan_meier",
    "censoring_km",
    "load_dataset",
    "load_schema",
]


class DataError(ValueError):
    """Raised for invalid survival data or ingestion failures."""


@dataclass(frozen=True)
class SurvivalObservation:
    time: float
    event: bool

    def __post_init__(self):
        if not np.isfinite(self.time) or self.time < 0:
            raise DataError("invalid time")
        if self.event not in (0, 1, True, False):
            raise DataError("invalid event flag")


@dataclass(frozen=True)
class Feature:
    """Column descriptor.

    ``kind`` is ``"continuous"`` or ``"categorical"``; categorical features
    carry ``levels`` (their labels, in level-index order) and ``ordered``.
    Ordered categoricals are split by thresholds on the level index,
    unordered ones by level subsets.
    """

    name: str
    kind: str = "continuous"
    levels: tuple = ()
    ordered: bool = True

    def __post_init__(self):
        if self.kind not in ("continuous", "categorical"):
            raise DataError(f"unknown feature kind {self.kind!r}")
        if self.kind == "categorical" and len(self.levels) < 2:
            raise DataError(f"categorical feature {self.name!r} needs >= 2 levels")

    @property
    def is_categorical(self) -> bool:
        return self.kind == "categorical"

    @property
    def level_count(self) -> int:
        return len(self.levels)

    @property
    def uses_subsets(self) -> bool:
        return self.is_categorical and not self.ordered

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind}
        if self.is_categorical:
            d["levels"] = list(self.levels)
            d["ordered"] = self.ordered
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Feature":
        return cls(
            name=str(d["name"]),
            kind=d.get("kind", "continuous"),
            levels=tuple(d.get("levels", ())),
            ordered=bool(d.get("ordered", True)),
        )


@dataclass(frozen=True)
class CovariateMatrix:
    """n x p covariate grid.

    Categorical cells hold level indices stored as floats. ``latent`` is an
    optional matrix of the continuous values the categorical columns were
    discretised from (kept by the simulator so noise can be re-applied).
    """

    values: np.ndarray
    features: tuple
    latent: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != len(self.features):
            raise DataError("covariate matrix does not match its feature list")
        if not np.all(np.isfinite(values)):
            raise DataError("missing value in covariate matrix")
        for j, feat in enumerate(self.features):
            if feat.is_categorical:
                col = values[:, j]
                if np.any(col < 0) or np.any(col >= feat.level_count) or np.any(col != np.floor(col)):
                    raise DataError(f"invalid level index in column {feat.name!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "features", tuple(self.features))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def columns(self) -> int:
        return self.values.shape[1]

    def take(self, idx) -> "CovariateMatrix":
        idx = np.asarray(idx)
        if idx.dtype != bool:
            idx = idx.astype(np.intp)
        latent = None if self.latent is None else self.latent[idx]
        return CovariateMatrix(self.values[idx], self.features, latent)


@dataclass(frozen=True)
class Dataset:
    covariates: CovariateMatrix
    time: np.ndarray
    event: np.ndarray

    def __post_init__(self):
        time = np.asarray(self.time, dtype=np.float64)
        event = np.asarray(self.event)
        if time.ndim != 1 or event.shape != time.shape:
            raise DataError("time and event must be 1-d arrays of equal length")
        if time.shape[0] != self.covariates.rows:
            raise DataError("covariates.rows must equal the number of outcomes")
        _check_outcomes(time, event)
        event = event.astype(np.int8)
        time.setflags(write=False)
        event.setflags(write=False)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "event", event)

    @property
    def n(self) -> int:
        return self.time.shape[0]

    @property
    def X(self) -> np.ndarray:
        return self.covariates.values

    @property
    def features(self) -> tuple:
        return self.covariates.features

    @property
    def outcomes(self) -> list[SurvivalObservation]:
        return [SurvivalObservation(float(t), bool(d)) for t, d in zip(self.time, self.event)]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        if idx.dtype != bool:
            idx = idx.astype(np.intp)
        return Dataset(self.covariates.take(idx), self.time[idx], self.event[idx])


def _check_outcomes(time: np.ndarray, event: np.ndarray) -> None:
    if not np.all(np.isfinite(time)) or np.any(time < 0):
        raise DataError("invalid time")
    if not np.all((event == 0) | (event == 1)):
        raise DataError("invalid event flag")


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous piecewise-constant curve.

    The value on ``[0, knots[0])`` is ``initial_value``; on
    ``[knots[k], knots[k+1])`` it is ``values[k]``; past the last knot the
    last value is carried forward.
    """

    knots: np.ndarray
    values: np.ndarray
    initial_value: float = 0.0

    def __post_init__(self):
        knots = np.array(self.knots, dtype=np.float64).reshape(-1)
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if knots.shape != values.shape:
            raise ValueError("knots and values must have the same length")
        if knots.size > 1 and np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        knots.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "initial_value", float(self.initial_value))

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        pos = np.searchsorted(self.knots, t, side="right")
        table = np.concatenate(([self.initial_value], self.values))
        out = table[pos]
        return float(out) if out.ndim == 0 else out

    def __eq__(self, other):
        if not isinstance(other, StepFunction):
            return NotImplemented
        return (
            self.initial_value == other.initial_value
            and np.array_equal(self.knots, other.knots)
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.initial_value, self.knots.tobytes(), self.values.tobytes()))

    def to_dict(self) -> dict:
        return {
            "knots": self.knots.tolist(),
            "values": self.values.tolist(),
            "initial_value": self.initial_value,
        }

    @classmethod
    def from_dict(cls, d: Mapping, default_initial: float = 0.0) -> "StepFunction":
        return cls(d["knots"], d["values"], d.get("initial_value", default_initial))


def _as_arrays(time, event) -> tuple[np.ndarray, np.ndarray]:
    if event is None:
        # a sequence of SurvivalObservation
        obs = list(time)
        time = [o.time for o in obs]
        event = [int(o.event) for o in obs]
    time = np.asarray(time, dtype=np.float64).reshape(-1)
    event = np.asarray(event).reshape(-1)
    if time.size == 0:
        raise DataError("empty dataset")
    if event.shape != time.shape:
        raise DataError("time and event must have equal length")
    _check_outcomes(time, event)
    return time, event.astype(np.int64)


def _risk_table(time: np.ndarray, event: np.ndarray):
    """Distinct event times with their event counts and at-risk counts."""
    order = np.argsort(time, kind="stable")
    t_sorted = time[order]
    d_sorted = event[order]
    uniq, first = np.unique(t_sorted, return_index=True)
    deaths = np.add.reduceat(d_sorted, first)
    at_risk = time.size - first
    keep = deaths > 0
    return uniq[keep], deaths[keep], at_risk[keep]


def nelson_aalen(time, event=None) -> StepFunction:
    """Nelson-Aalen cumulative hazard.

    Accepts either ``(time, event)`` arrays or a single sequence of
    :class:`SurvivalObservation`. Knots sit at the distinct death times and
    a tied group at ``t`` contributes ``d_t / n_t``.
    """
    time, event = _as_arrays(time, event)
    t, d, r = _risk_table(time, event)
    return StepFunction(t, np.cumsum(d / r), 0.0)


def kaplan_meier(time, event=None) -> StepFunction:
    """Product-limit survival estimate; equals 1 before the first death."""
    time, event = _as_arrays(time, event)
    t, d, r = _risk_table(time, event)
    return StepFunction(t, np.cumprod(1.0 - d / r), 1.0)


def censoring_km(time, event=None) -> StepFunction:
    """Kaplan-Meier estimate of the censoring distribution (flipped flags)."""
    time, event = _as_arrays(time, event)
    return kaplan_meier(time, 1 - event)


# --------------------------------------------------------------------------
# ingestion


@dataclass
class IngestConfig:
    """How to read a CSV: which columns hold the outcome, which are categorical.

    ``categorical`` maps a column name to ``{"levels": [...], "ordered": bool}``
    exactly as in the JSON schema sidecar.
    """

    time_column: str = "time"
    event_column: str = "event"
    categorical: dict = field(default_factory=dict)


def load_schema(source) -> dict:
    """Parse a JSON schema sidecar into the ``categorical`` mapping."""
    if hasattr(source, "read"):
        raw = json.load(source)
    else:
        raw = json.loads(source)
    if not isinstance(raw, dict):
        raise DataError("schema must be a JSON object")
    out = {}
    for col, spec in raw.items():
        if not isinstance(spec, dict) or spec.get("kind", "categorical") != "categorical":
            raise DataError(f"unsupported schema entry for column {col!r}")
        levels = spec.get("levels")
        if not isinstance(levels, list) or len(levels) < 2:
            raise DataError(f"column {col!r} needs a list of at least 2 levels")
        out[col] = {"levels": [str(v) for v in levels], "ordered": bool(spec.get("ordered", False))}
    return out


def load_dataset(source, schema: IngestConfig | None = None) -> Dataset:
    """Read a CSV byte or text stream into a validated :class:`Dataset`.

    Rows and columns in error messages are 1-based data rows and column
    names respectively.
    """
    schema = schema or IngestConfig()
    if isinstance(source, (bytes, bytearray)):
        text = source.decode("utf-8")
    elif hasattr(source, "read"):
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    else:
        text = str(source)
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError("empty dataset") from None
    for col in (schema.time_column, schema.event_column):
        if col not in header:
            raise DataError(f"column {col!r} not found in header")
    unknown = set(schema.categorical) - set(header)
    if unknown:
        raise DataError(f"schema names unknown columns: {sorted(unknown)}")

    t_idx = header.index(schema.time_column)
    e_idx = header.index(schema.event_column)
    cov_idx = [j for j in range(len(header)) if j not in (t_idx, e_idx)]
    features = []
    for j in cov_idx:
        spec = schema.categorical.get(header[j])
        if spec is None:
            features.append(Feature(header[j]))
        else:
            features.append(Feature(header[j], "categorical", tuple(spec["levels"]), spec["ordered"]))
    level_maps = [
        {lvl: k for k, lvl in enumerate(f.levels)} if f.is_categorical else None for f in features
    ]

    times, events, rows = [], [], []
    for r, line in enumerate(reader, start=1):
        if not line or all(not c.strip() for c in line):
            continue
        if len(line) != len(header):
            raise DataError(f"row {r} has {len(line)} cells, expected {len(header)}")
        cells = [c.strip() for c in line]
        for j, c in enumerate(cells):
            if c == "":
                raise DataError(f"missing value at row {r}, column {header[j]}")
        try:
            t = float(cells[t_idx])
        except ValueError:
            raise DataError(f"invalid time at row {r}") from None
        if not np.isfinite(t) or t < 0:
            raise DataError(f"invalid time at row {r}")
        if cells[e_idx] not in ("0", "1"):
            raise DataError(f"invalid event flag at row {r}")
        row = []
        for f, lm, j in zip(features, level_maps, cov_idx):
            c = cells[j]
            if lm is not None:
                if c not in lm:
                    raise DataError(f"unknown level {c!r} at row {r}, column {f.name}")
                row.append(float(lm[c]))
            else:
                try:
                    v = float(c)
                except ValueError:
                    raise DataError(f"non-numeric value at row {r}, column {f.name}") from None
                if not np.isfinite(v):
                    raise DataError(f"missing value at row {r}, column {f.name}")
                row.append(v)
        times.append(t)
        events.append(int(cells[e_idx]))
        rows.append(row)
    if not rows:
        raise DataError("empty dataset")
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(features))
    return Dataset(CovariateMatrix(X, tuple(features)), np.array(times), np.array(events))


def from_arrays(X, time, event, features: Sequence[Feature] | None = None) -> Dataset:
    """Convenience constructor; features default to continuous ``x1..xp``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if features is None:
        features = tuple(Feature(f"x{j + 1}") for j in range(X.shape[1]))
    return Dataset(CovariateMatrix(X, tuple(features)), time, event)


def outcomes_from(observations: Iterable[SurvivalObservation]) -> tuple[np.ndarray, np.ndarray]:
    obs = list(observations)
    return (
        np.array([o.time for o in obs], dtype=np.float64),
        np.array([int(o.event) for o in obs], dtype=np.int8),
    )
