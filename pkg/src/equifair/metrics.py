"""Audit metrics for scores: Wasserstein unfairness and predictive performance.

Unfairness for one attribute is the largest W1 distance between the pooled
score distribution and the distribution inside any single modality. The
multi-attribute measure sums the per-attribute values. Metrics never jitter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Union

import numpy as np

from .calibration import BASE_LABEL, MsaCalibrator, as_sensitive_frame
from .distributions import (
    DEFAULT_GRID_SIZE,
    EmpiricalDistribution,
    _as_finite_vector,
    midpoint_grid,
    wasserstein1_exact,
)
from .errors import DegenerateInputError, NotFittedError, ValidationError

METHODS = ("grid", "exact")
METRICS = ("mse", "mae", "accuracy")


@dataclass(frozen=True)
class UnfairnessReport:
    per_attribute: Dict[str, float]
    total: float
    method: str

    def to_dict(self) -> dict:
        return {"per_attribute": dict(self.per_attribute), "total": self.total, "method": self.method}


@dataclass(frozen=True)
class DecompositionRow:
    stage: str
    per_attribute: Dict[str, float]
    total: float


@dataclass(frozen=True)
class DecompositionTable:
    attributes: List[str]
    rows: List[DecompositionRow] = field(default_factory=list)
    method: str = "grid"

    def to_dict(self) -> dict:
        return {
            "attributes": list(self.attributes),
            "method": self.method,
            "rows": [{"stage": r.stage, "per_attribute": dict(r.per_attribute), "total": r.total}
                     for r in self.rows],
        }

    def row(self, stage: str) -> DecompositionRow:
        for r in self.rows:
            if r.stage == stage:
                return r
        raise KeyError(stage)


def _groups(y: np.ndarray, labels: np.ndarray, name: str):
    mods = np.unique(labels.astype(str))
    if mods.size < 2:
        raise DegenerateInputError(f"sensitive column {name!r} has a single modality")
    labels = labels.astype(str)
    return [np.sort(y[labels == m]) for m in mods]


def _prepare(predictions, sensitive):
    frame = as_sensitive_frame(sensitive)
    y = _as_finite_vector(predictions, "predictions")
    if y.size != len(frame):
        raise ValidationError(f"got {y.size} predictions for {len(frame)} sensitive rows")
    if y.size == 0:
        raise DegenerateInputError("no predictions to audit")
    return y, frame


def _attribute_w1(y_sorted, groups, method, grid_size) -> float:
    if method == "grid":
        u = midpoint_grid(grid_size)
        pooled = EmpiricalDistribution(y_sorted).quantile(u)
        return max(float(np.mean(np.abs(pooled - EmpiricalDistribution(g).quantile(u)))) for g in groups)
    pooled = EmpiricalDistribution(y_sorted)
    return max(wasserstein1_exact(pooled, EmpiricalDistribution(g)) for g in groups)


def unfairness(predictions, sensitive, method: str = "grid",
               grid_size: int = DEFAULT_GRID_SIZE) -> UnfairnessReport:
    """Wasserstein unfairness of ``predictions`` for every sensitive column.

    ``method="grid"`` integrates the quantile gap on a midpoint grid of
    ``grid_size`` levels; ``method="exact"`` uses the closed-form W1.
    """
    if method not in METHODS:
        raise ValidationError(f"method must be one of {METHODS}, got {method!r}")
    y, frame = _prepare(predictions, sensitive)
    y_sorted = np.sort(y)
    per = {}
    for j, name in enumerate(frame.columns):
        per[name] = _attribute_w1(y_sorted, _groups(y, frame.rows[:, j], name), method, grid_size)
    return UnfairnessReport(per, float(sum(per.values())), method)


def unfairness_ks(predictions, sensitive) -> UnfairnessReport:
    """Kolmogorov-Smirnov unfairness: largest sup-norm CDF gap to the pooled CDF."""
    y, frame = _prepare(predictions, sensitive)
    support = np.unique(y)
    pooled = EmpiricalDistribution(np.sort(y)).cdf(support)
    per = {}
    for j, name in enumerate(frame.columns):
        gaps = [np.max(np.abs(pooled - EmpiricalDistribution(g).cdf(support)))
                for g in _groups(y, frame.rows[:, j], name)]
        per[name] = float(max(gaps))
    return UnfairnessReport(per, float(sum(per.values())), "ks")


def performance(y_true, y_pred, metric: Union[str, Callable] = "mse", threshold=None) -> float:
    """Score ``y_pred`` against ``y_true``.

    ``metric`` is ``"mse"`` (default), ``"mae"``, ``"accuracy"`` or any
    callable ``f(y_true, y_pred)``. Accuracy thresholds the scores at
    ``threshold`` (predict 1 when ``score >= threshold``) and has no default.
    """
    t = _as_finite_vector(y_true, "y_true")
    p = _as_finite_vector(y_pred, "y_pred")
    if t.size != p.size:
        raise ValidationError(f"y_true has {t.size} entries but y_pred has {p.size}")
    if t.size == 0:
        raise DegenerateInputError("empty inputs")
    if callable(metric):
        return float(metric(t, p))
    if metric == "mse":
        return float(np.mean((t - p) ** 2))
    if metric == "mae":
        return float(np.mean(np.abs(t - p)))
    if metric == "accuracy":
        if threshold is None or not 0 < threshold < 1:
            raise ValidationError("accuracy needs an explicit threshold in (0, 1)")
        if not np.all((t == 0) | (t == 1)):
            raise ValidationError("accuracy needs binary labels in {0, 1}")
        return float(np.mean((p >= threshold).astype(float) == t))
    raise ValidationError(f"unknown metric {metric!r}; expected one of {METRICS} or a callable")


def price_of_fairness(y_true, y_base, y_fair, metric="mse", threshold=None) -> float:
    """Change in ``metric`` caused by the correction; may be negative on samples."""
    base = _as_finite_vector(y_base, "y_base")
    fair = _as_finite_vector(y_fair, "y_fair")
    if base.size != fair.size:
        raise ValidationError("y_base and y_fair must have the same length")
    return performance(y_true, fair, metric, threshold) - performance(y_true, base, metric, threshold)


def decompose(source, sensitive, method: str = "grid",
              grid_size: int = DEFAULT_GRID_SIZE) -> DecompositionTable:
    """Per-attribute unfairness after every correction step.

    ``source`` is an :class:`MsaCalibrator` whose ``transform`` has run, or
    directly a ``y_fair`` mapping of stage label to scores.
    """
    y_fair = source.y_fair if isinstance(source, MsaCalibrator) else source
    if not y_fair:
        raise NotFittedError("no correction trace; run transform() first")
    if next(iter(y_fair)) != BASE_LABEL:
        raise ValidationError(f"the first stage must be {BASE_LABEL!r}")
    frame = as_sensitive_frame(sensitive)
    rows = []
    for stage, scores in y_fair.items():
        report = unfairness(scores, frame, method, grid_size)
        rows.append(DecompositionRow(stage, report.per_attribute, report.total))
    return DecompositionTable(list(frame.columns), rows, method)
