"""Demographic-parity calibrators built on Wasserstein barycenters.

:class:`SsaCalibrator` handles one sensitive attribute: every score is pushed
through the CDF of its own group and then through the weighted average of all
group quantile functions. :class:`MsaCalibrator` chains one such stage per
attribute, fitting stage ``i + 1`` on the calibration scores already corrected
by stages ``1..i``.

Each stage jitters its own input with a sub-seed derived from
``(seed, stage index, role)``, where role 0 is fit and role 1 is transform.
Two calibrators built with the same seed therefore apply the same noise.
"""

from __future__ import annotations

import numbers
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .distributions import QUANTILE_METHODS, EmpiricalDistribution, _as_finite_vector, jitter
from .errors import DegenerateInputError, NotFittedError, SchemaError, UnknownModalityError, ValidationError

DEFAULT_SIGMA = 1e-4
DEFAULT_SEED = 0
BASE_LABEL = "Base model"
SCHEMA_VERSION = 1

_FIT, _TRANSFORM = 0, 1


def modality_label(value) -> str:
    """Canonical string form of a modality: ``1``, ``1.0`` and ``" 1 "`` all map to ``"1"``."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, numbers.Integral):
        return str(int(value))
    if isinstance(value, numbers.Real):
        value = float(value)
        if not np.isfinite(value):
            raise ValidationError(f"modality values must be finite, got {value}")
        return str(int(value)) if value.is_integer() else repr(value)
    if value is None:
        raise ValidationError("missing modality value")
    label = str(value).strip()
    if not label:
        raise ValidationError("empty modality value")
    return label


@dataclass(frozen=True, eq=False)
class SensitiveFrame:
    """``N x r`` table of discrete sensitive attributes with named columns.

    Modalities are stored as canonical strings (see :func:`modality_label`).
    """

    columns: tuple
    rows: np.ndarray

    def __post_init__(self):
        columns = tuple(str(c) for c in self.columns)
        if not columns:
            raise ValidationError("a sensitive frame needs at least one column")
        if len(set(columns)) != len(columns):
            raise ValidationError(f"duplicated sensitive column names: {list(columns)}")
        rows = np.asarray(self.rows, dtype=object)
        if rows.ndim == 1:
            rows = rows.reshape(-1, 1)
        if rows.ndim != 2 or rows.shape[1] != len(columns):
            raise ValidationError(
                f"rows have shape {rows.shape}, expected (N, {len(columns)})"
            )
        labels = np.empty(rows.shape, dtype=object)
        for (i, j), v in np.ndenumerate(rows):
            try:
                labels[i, j] = modality_label(v)
            except ValidationError as exc:
                raise ValidationError(f"row {i}, column {columns[j]!r}: {exc}") from None
        labels.setflags(write=False)
        object.__setattr__(self, "columns", columns)
        object.__setattr__(self, "rows", labels)

    @classmethod
    def from_any(cls, data, columns: Optional[Sequence[str]] = None) -> "SensitiveFrame":
        """Build a frame from a DataFrame, Series, mapping or array."""
        if isinstance(data, SensitiveFrame):
            if columns is not None and tuple(columns) != data.columns:
                return cls(tuple(columns), data.rows)
            return data
        if hasattr(data, "columns") and hasattr(data, "to_numpy"):
            names = [str(c) for c in data.columns] if columns is None else list(columns)
            return cls(tuple(names), data.to_numpy(dtype=object))
        if hasattr(data, "to_numpy") and getattr(data, "ndim", None) == 1:
            name = getattr(data, "name", None)
            names = list(columns) if columns is not None else [str(name) if name is not None else "A1"]
            return cls(tuple(names), data.to_numpy(dtype=object).reshape(-1, 1))
        if isinstance(data, dict):
            names = [str(k) for k in data] if columns is None else list(columns)
            cols = [np.asarray(list(v), dtype=object) for v in data.values()]
            lengths = {len(c) for c in cols}
            if len(lengths) > 1:
                raise ValidationError("all sensitive columns must have the same length")
            return cls(tuple(names), np.column_stack(cols) if cols else np.empty((0, 0), dtype=object))
        arr = np.asarray(data, dtype=object)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise ValidationError(f"sensitive features must be 1-D or 2-D, got shape {arr.shape}")
        names = list(columns) if columns is not None else [f"A{j + 1}" for j in range(arr.shape[1])]
        return cls(tuple(names), arr)

    def __len__(self):
        return self.rows.shape[0]

    @property
    def r(self) -> int:
        return len(self.columns)

    def column(self, name) -> np.ndarray:
        try:
            j = self.columns.index(str(name))
        except ValueError:
            raise ValidationError(f"unknown sensitive column {name!r}; have {list(self.columns)}") from None
        return self.rows[:, j]

    def select(self, names: Iterable[str]) -> "SensitiveFrame":
        names = [str(n) for n in names]
        return SensitiveFrame(tuple(names), np.column_stack([self.column(n) for n in names]))

    def modalities(self, name) -> List[str]:
        return sorted(set(self.column(name)))


def as_sensitive_frame(data, columns=None) -> SensitiveFrame:
    return SensitiveFrame.from_any(data, columns)


@dataclass(frozen=True, eq=False)
class Group:
    weight: float
    dist: EmpiricalDistribution


def _stage_seed(seed, stage: int, role: int):
    return None if seed is None else [int(seed), int(stage), role]


def _check_epsilon(eps) -> float:
    eps = float(eps)
    if not 0.0 <= eps <= 1.0:
        raise ValidationError(f"epsilon must lie in [0, 1], got {eps}")
    return eps


def epsilon_vector(epsilon, r: int) -> List[float]:
    """Validate a per-attribute epsilon; ``None`` means exact fairness everywhere."""
    if epsilon is None:
        return [0.0] * r
    if np.ndim(epsilon) == 0:
        raise ValidationError(f"epsilon must be a sequence of length {r}")
    values = [_check_epsilon(e) for e in epsilon]
    if len(values) != r:
        raise ValidationError(f"epsilon has length {len(values)}, expected {r}")
    return values


def _check_predictions(predictions, n_rows: int) -> np.ndarray:
    y = _as_finite_vector(predictions, "predictions")
    if y.size != n_rows:
        raise ValidationError(f"got {y.size} predictions for {n_rows} sensitive rows")
    return y


class SsaCalibrator:
    """Exact or approximate DP correction for a single sensitive attribute.

    Parameters
    ----------
    sigma : float
        Scale of the Gaussian jitter added before fitting and transforming.
    seed : int or None
        Base seed for the jitter. ``None`` draws fresh noise on every call.
    interpolation : {"linear", "inverse_cdf"}
        Quantile function used to build the barycenter. ``"linear"``
        interpolates between order statistics; ``"inverse_cdf"`` is the plain
        step-function generalized inverse.
    """

    def __init__(self, sigma: float = DEFAULT_SIGMA, seed: Optional[int] = DEFAULT_SEED,
                 interpolation: str = "linear", stage: int = 0):
        if not np.isfinite(sigma) or sigma < 0:
            raise ValidationError(f"sigma must be a non-negative finite number, got {sigma}")
        if interpolation not in QUANTILE_METHODS:
            raise ValidationError(f"interpolation must be one of {QUANTILE_METHODS}")
        self.sigma = float(sigma)
        self.seed = seed
        self.interpolation = interpolation
        self.stage = stage
        self.attribute: Optional[str] = None
        self.groups: Dict[str, Group] = {}

    @property
    def fitted(self) -> bool:
        return bool(self.groups)

    @property
    def weights(self) -> Dict[str, float]:
        return {a: g.weight for a, g in self.groups.items()}

    def __repr__(self):
        state = f"attribute={self.attribute!r}, groups={list(self.groups)}" if self.fitted else "unfitted"
        return f"SsaCalibrator(sigma={self.sigma}, seed={self.seed}, {state})"

    def _single_column(self, sensitive, for_fit: bool):
        frame = as_sensitive_frame(sensitive)
        if for_fit:
            if frame.r != 1:
                raise ValidationError(f"SsaCalibrator expects one sensitive column, got {frame.r}")
            return frame.columns[0], frame.rows[:, 0]
        if self.attribute in frame.columns:
            return self.attribute, frame.column(self.attribute)
        if frame.r == 1:
            return frame.columns[0], frame.rows[:, 0]
        raise ValidationError(f"sensitive frame has no column {self.attribute!r}")

    def _fit_labels(self, y: np.ndarray, labels: np.ndarray, attribute: str) -> np.ndarray:
        """Fit on already validated arrays; returns the jittered inputs that were used."""
        if y.size < 2:
            raise DegenerateInputError("need at least two calibration predictions")
        yj = jitter(y, self.sigma, _stage_seed(self.seed, self.stage, _FIT))
        mods, inverse, counts = np.unique(labels.astype(str), return_inverse=True, return_counts=True)
        if mods.size < 2:
            raise DegenerateInputError(
                f"attribute {attribute!r} has a single modality {str(mods[0])!r}; correction is vacuous"
            )
        order = np.argsort(inverse, kind="stable")
        splits = np.split(yj[order], np.cumsum(counts)[:-1])
        n = y.size
        self.groups = {
            str(m): Group(weight=int(c) / n,
                          dist=EmpiricalDistribution(np.sort(v), jitter_sigma=self.sigma, seed=self.seed))
            for m, c, v in zip(mods, counts, splits)
        }
        self.attribute = attribute
        return yj

    def fit(self, predictions, sensitive) -> "SsaCalibrator":
        """Estimate group weights and the per-group empirical distributions."""
        attribute, labels = self._single_column(sensitive, for_fit=True)
        y = _check_predictions(predictions, labels.size)
        self._fit_labels(y, labels, attribute)
        return self

    def _group_index(self, labels: np.ndarray) -> Dict[str, np.ndarray]:
        index = {}
        known = self.groups
        for row, lab in enumerate(labels):
            if lab not in known:
                raise UnknownModalityError(self.attribute, lab, row)
        labels = labels.astype(str)
        for a in known:
            index[a] = np.flatnonzero(labels == a)
        return index

    def fair_map(self, yj: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """Barycentric projection of already jittered scores (no blending)."""
        if not self.fitted:
            raise NotFittedError("calibrator is not fitted; call fit() first")
        out = np.zeros(yj.size)
        quantiles = [(g.weight, g.dist.quantile_function(self.interpolation)) for g in self.groups.values()]
        for a, idx in self._group_index(labels).items():
            if idx.size == 0:
                continue
            levels = self.groups[a].dist.cdf(yj[idx])
            acc = np.zeros(idx.size)
            for w, q in quantiles:
                acc += w * q(levels)
            out[idx] = acc
        return out

    def transform(self, predictions, sensitive, epsilon: float = 0.0, seed=None) -> np.ndarray:
        """Return ``(1 - epsilon) * fair + epsilon * jittered`` scores.

        ``seed`` overrides the calibrator's seed for the transform jitter.
        """
        if not self.fitted:
            raise NotFittedError("calibrator is not fitted; call fit() first")
        eps = _check_epsilon(epsilon)
        _, labels = self._single_column(sensitive, for_fit=False)
        y = _check_predictions(predictions, labels.size)
        return self._transform_labels(y, labels, eps, self.seed if seed is None else seed)

    def _transform_labels(self, y, labels, eps, seed):
        yj = jitter(y, self.sigma, _stage_seed(seed, self.stage, _TRANSFORM))
        fair = self.fair_map(yj, labels)
        return (1.0 - eps) * fair + eps * yj

    def to_stage_document(self) -> dict:
        if not self.fitted:
            raise NotFittedError("cannot serialize an unfitted calibrator")
        return {
            "attribute": self.attribute,
            "groups": {
                a: {"weight": g.weight, "values": g.dist.values.tolist()}
                for a, g in self.groups.items()
            },
        }


class MsaCalibrator:
    """Sequential DP correction over several sensitive attributes.

    Stages follow the column order of the calibration frame. After
    :meth:`transform`, ``y_fair`` maps ``"Base model"`` and then each
    attribute name to the scores obtained after that correction step.
    """

    def __init__(self, sigma: float = DEFAULT_SIGMA, seed: Optional[int] = DEFAULT_SEED,
                 interpolation: str = "linear"):
        # validates the parameters the same way a stage would
        SsaCalibrator(sigma, seed, interpolation)
        self.sigma = float(sigma)
        self.seed = seed
        self.interpolation = interpolation
        self.stages: List[SsaCalibrator] = []
        self.y_fair: Dict[str, np.ndarray] = {}

    @property
    def fitted(self) -> bool:
        return bool(self.stages)

    @property
    def attributes(self) -> List[str]:
        return [s.attribute for s in self.stages]

    def __repr__(self):
        return f"MsaCalibrator(sigma={self.sigma}, seed={self.seed}, attributes={self.attributes})"

    def fit(self, predictions, sensitive) -> "MsaCalibrator":
        frame = as_sensitive_frame(sensitive)
        if BASE_LABEL in frame.columns:
            raise ValidationError(f"{BASE_LABEL!r} is reserved and cannot name a sensitive column")
        x = _check_predictions(predictions, len(frame))
        stages = []
        for i, name in enumerate(frame.columns):
            stage = SsaCalibrator(self.sigma, self.seed, self.interpolation, stage=i)
            xj = stage._fit_labels(x, frame.rows[:, i], name)
            x = stage.fair_map(xj, frame.rows[:, i])
            stages.append(stage)
        self.stages = stages
        self.y_fair = {}
        return self

    def _stage_columns(self, sensitive) -> SensitiveFrame:
        frame = as_sensitive_frame(sensitive)
        names = self.attributes
        if all(n in frame.columns for n in names):
            return frame.select(names)
        if not set(names) & set(frame.columns) and frame.r == len(names):
            return SensitiveFrame(tuple(names), frame.rows)
        raise ValidationError(
            f"sensitive columns {list(frame.columns)} do not match calibrated stages {names}"
        )

    def transform_trace(self, predictions, sensitive, epsilon=None, seed=None) -> Dict[str, np.ndarray]:
        """Like :meth:`transform` but returns the per-stage scores without storing them."""
        if not self.fitted:
            raise NotFittedError("calibrator is not fitted; call fit() first")
        frame = self._stage_columns(sensitive)
        eps = epsilon_vector(epsilon, len(self.stages))
        x = _check_predictions(predictions, len(frame))
        seed = self.seed if seed is None else seed
        trace = {BASE_LABEL: x.copy()}
        for i, stage in enumerate(self.stages):
            x = stage._transform_labels(x, frame.rows[:, i], eps[i], seed)
            trace[stage.attribute] = x
        return trace

    def transform(self, predictions, sensitive, epsilon=None, seed=None) -> np.ndarray:
        trace = self.transform_trace(predictions, sensitive, epsilon, seed)
        self.y_fair = trace
        return trace[self.attributes[-1]]


def fit_ssa(predictions, sensitive, sigma=DEFAULT_SIGMA, seed=DEFAULT_SEED, **kwargs) -> SsaCalibrator:
    return SsaCalibrator(sigma, seed, **kwargs).fit(predictions, sensitive)


def transform_ssa(cal: SsaCalibrator, predictions, sensitive, epsilon=0.0) -> np.ndarray:
    return cal.transform(predictions, sensitive, epsilon)


def fit_msa(predictions, sensitive, sigma=DEFAULT_SIGMA, seed=DEFAULT_SEED, **kwargs) -> MsaCalibrator:
    return MsaCalibrator(sigma, seed, **kwargs).fit(predictions, sensitive)


def transform_msa(cal: MsaCalibrator, predictions, sensitive, epsilon=None) -> np.ndarray:
    return cal.transform(predictions, sensitive, epsilon)


# -- model documents ---------------------------------------------------------

def save_calibrator(cal) -> dict:
    """Serialize a fitted calibrator to a JSON-compatible dict."""
    if isinstance(cal, SsaCalibrator):
        kind, stages = "ssa", [cal]
    elif isinstance(cal, MsaCalibrator):
        kind, stages = "msa", cal.stages
    else:
        raise TypeError(f"cannot serialize {type(cal).__name__}")
    if not stages or not all(s.fitted for s in stages):
        raise NotFittedError("cannot serialize an unfitted calibrator")
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "sigma": cal.sigma,
        "seed": cal.seed,
        "interpolation": cal.interpolation,
        "stages": [s.to_stage_document() for s in stages],
    }


def _require(doc, key, where):
    if not isinstance(doc, dict) or key not in doc:
        raise SchemaError(f"{where}: missing field {key!r}")
    return doc[key]


def _load_stage(doc, i, sigma, seed, interpolation) -> SsaCalibrator:
    where = f"stages[{i}]"
    attribute = _require(doc, "attribute", where)
    groups = _require(doc, "groups", where)
    if not isinstance(attribute, str) or not attribute:
        raise SchemaError(f"{where}: attribute must be a non-empty string")
    if not isinstance(groups, dict) or len(groups) < 2:
        raise SchemaError(f"{where}: groups must map at least two modalities")
    stage = SsaCalibrator(sigma, seed, interpolation, stage=i)
    loaded = {}
    for mod, g in groups.items():
        gwhere = f"{where}.groups[{mod!r}]"
        weight = _require(g, "weight", gwhere)
        values = _require(g, "values", gwhere)
        if isinstance(weight, bool) or not isinstance(weight, (int, float)) or not 0 < weight <= 1:
            raise SchemaError(f"{gwhere}: weight must be a number in (0, 1]")
        if not isinstance(values, list) or not values:
            raise SchemaError(f"{gwhere}: values must be a non-empty list")
        try:
            dist = EmpiricalDistribution(np.asarray(values, dtype=float), jitter_sigma=sigma, seed=seed)
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{gwhere}: {exc}") from None
        loaded[modality_label(mod)] = Group(float(weight), dist)
    total = sum(g.weight for g in loaded.values())
    if abs(total - 1.0) > 1e-9:
        raise SchemaError(f"{where}: group weights sum to {total}, expected 1")
    stage.attribute = attribute
    stage.groups = loaded
    return stage


def load_calibrator(doc: dict):
    """Rebuild a calibrator from :func:`save_calibrator` output."""
    if not isinstance(doc, dict):
        raise SchemaError("model document must be a JSON object")
    version = _require(doc, "schema_version", "document")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")
    sigma = _require(doc, "sigma", "document")
    if isinstance(sigma, bool) or not isinstance(sigma, (int, float)) or sigma < 0:
        raise SchemaError("sigma must be a non-negative number")
    seed = doc.get("seed", DEFAULT_SEED)
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
        raise SchemaError("seed must be a non-negative integer or null")
    interpolation = doc.get("interpolation", "linear")
    if interpolation not in QUANTILE_METHODS:
        raise SchemaError(f"interpolation must be one of {QUANTILE_METHODS}")
    kind = doc.get("kind", "msa")
    stages_doc = _require(doc, "stages", "document")
    if not isinstance(stages_doc, list) or not stages_doc:
        raise SchemaError("stages must be a non-empty list")
    stages = [_load_stage(s, i, float(sigma), seed, interpolation) for i, s in enumerate(stages_doc)]
    if kind == "ssa":
        if len(stages) != 1:
            raise SchemaError("an ssa document holds exactly one stage")
        return stages[0]
    if kind != "msa":
        raise SchemaError(f"unknown calibrator kind {kind!r}")
    names = [s.attribute for s in stages]
    if len(set(names)) != len(names):
        raise SchemaError(f"duplicated stage attributes {names}")
    cal = MsaCalibrator(float(sigma), seed, interpolation)
    cal.stages = stages
    return cal
