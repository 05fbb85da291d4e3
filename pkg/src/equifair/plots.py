"""Plot data for fairness-performance diagnostics, plus a small SVG renderer.

Each ``*_plot_data`` function fits the sequential calibrator on the
calibration inputs, corrects the test inputs and hands the per-step scores to
:mod:`equifair.metrics`. No fairness arithmetic lives here.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np
from scipy import stats

from .calibration import BASE_LABEL, DEFAULT_SEED, DEFAULT_SIGMA, MsaCalibrator, as_sensitive_frame, epsilon_vector
from .distributions import DEFAULT_GRID_SIZE, _as_finite_vector
from .errors import ValidationError
from . import metrics

KINDS = ("arrow", "multiple_arrow", "density", "waterfall")
DEFAULT_MAX_PATHS = 120
DENSITY_POINTS = 512
_BANDWIDTH_FLOOR = 1e-3


@dataclass
class PlotSpec:
    kind: str
    series: List[dict]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown plot kind {self.kind!r}; expected one of {KINDS}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "series": self.series, "meta": self.meta}

    @classmethod
    def from_dict(cls, doc: dict) -> "PlotSpec":
        return cls(kind=doc["kind"], series=doc["series"], meta=doc.get("meta", {}))


def _plain(x):
    """Convert numpy scalars and arrays to JSON-native values."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


class _Pipeline:
    """Shared fit/transform plumbing for every plot kind."""

    def __init__(self, sensitive_calib, sensitive_test, predictions_calib, predictions_test,
                 epsilon=None, sigma=DEFAULT_SIGMA, seed=DEFAULT_SEED, method="grid",
                 grid_size=DEFAULT_GRID_SIZE, interpolation="linear"):
        self.calib = as_sensitive_frame(sensitive_calib)
        self.test = as_sensitive_frame(sensitive_test)
        self.y_calib = _as_finite_vector(predictions_calib, "predictions_calib")
        self.y_test = _as_finite_vector(predictions_test, "predictions_test")
        self.attributes = list(self.calib.columns)
        self.epsilon = dict(zip(self.attributes, epsilon_vector(epsilon, len(self.attributes))))
        self.sigma, self.seed, self.interpolation = sigma, seed, interpolation
        self.method, self.grid_size = method, grid_size

    def trace(self, order: Sequence[str]) -> Dict[str, np.ndarray]:
        order = list(order)
        if sorted(order) != sorted(self.attributes):
            raise ValidationError(f"order {order} is not a permutation of {self.attributes}")
        cal = MsaCalibrator(self.sigma, self.seed, self.interpolation)
        cal.fit(self.y_calib, self.calib.select(order))
        return cal.transform_trace(self.y_test, self.test.select(order), [self.epsilon[a] for a in order])

    def unfairness(self, scores) -> metrics.UnfairnessReport:
        return metrics.unfairness(scores, self.test.select(self.attributes), self.method, self.grid_size)

    def meta(self, order) -> dict:
        return {
            "order": list(order),
            "epsilon": [self.epsilon[a] for a in order],
            "n_calib": int(self.y_calib.size),
            "n_test": int(self.y_test.size),
            "method": self.method,
            "grid_size": int(self.grid_size),
            "sigma": self.sigma,
            "seed": self.seed,
        }


def _metric_label(metric, threshold) -> str:
    if callable(metric):
        return getattr(metric, "__name__", "performance")
    return {"mse": "MSE", "mae": "MAE", "accuracy": f"Accuracy (threshold {threshold})"}.get(metric, str(metric))


def _arrow_series(pipe: _Pipeline, order, y_true, metric, threshold) -> dict:
    trace = pipe.trace(order)
    points = []
    for stage, scores in trace.items():
        rep = pipe.unfairness(scores)
        points.append({
            "stage": stage,
            "unfairness": rep.total,
            "per_attribute": rep.per_attribute,
            "performance": metrics.performance(y_true, scores, metric, threshold),
        })
    return {
        "name": " -> ".join(order),
        "order": list(order),
        "x_label": "Unfairness",
        "y_label": _metric_label(metric, threshold),
        "points": points,
        "edges": [[i, i + 1] for i in range(len(points) - 1)],
    }


def _labels(y_true, n):
    if y_true is None:
        raise ValidationError("y_true is required: the performance axis needs labels")
    y = _as_finite_vector(y_true, "y_true")
    if y.size != n:
        raise ValidationError(f"y_true has {y.size} entries for {n} test predictions")
    return y


def arrow_plot_data(sensitive_calib, sensitive_test, predictions_calib, predictions_test, y_true,
                    epsilon=None, order=None, metric="mse", threshold=None, **options) -> PlotSpec:
    """Unfairness/performance after each correction step for one order."""
    pipe = _Pipeline(sensitive_calib, sensitive_test, predictions_calib, predictions_test, epsilon, **options)
    y = _labels(y_true, pipe.y_test.size)
    order = list(order) if order is not None else pipe.attributes
    series = _arrow_series(pipe, order, y, metric, threshold)
    return PlotSpec("arrow", _plain([series]), _plain(pipe.meta(order)))


def multiple_arrow_plot_data(sensitive_calib, sensitive_test, predictions_calib, predictions_test, y_true,
                             epsilon=None, metric="mse", threshold=None, max_paths=DEFAULT_MAX_PATHS,
                             **options) -> PlotSpec:
    """One arrow path per permutation of the sensitive attributes."""
    pipe = _Pipeline(sensitive_calib, sensitive_test, predictions_calib, predictions_test, epsilon, **options)
    r = len(pipe.attributes)
    if r < 2:
        raise ValidationError("multiple_arrow needs at least two attributes; use arrow_plot_data instead")
    if math.factorial(r) > max_paths:
        raise ValidationError(f"{r} attributes give {math.factorial(r)} paths, above the cap of {max_paths}")
    y = _labels(y_true, pipe.y_test.size)
    series = [_arrow_series(pipe, perm, y, metric, threshold)
              for perm in itertools.permutations(pipe.attributes)]
    meta = pipe.meta(pipe.attributes)
    meta["paths"] = [s["order"] for s in series]
    return PlotSpec("multiple_arrow", _plain(series), _plain(meta))


def silverman_bandwidth(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    std = np.std(x)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(std, (q75 - q25) / 1.34) if q75 > q25 else std
    h = 0.9 * spread * x.size ** (-0.2)
    return max(h, _BANDWIDTH_FLOOR * max(1.0, abs(float(np.mean(x)))))


def gaussian_kde(x: np.ndarray, grid: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros(grid.size)
    for chunk in np.array_split(x, max(1, x.size // 2048)):
        z = (grid[None, :] - chunk[:, None]) / h
        out += np.exp(-0.5 * z * z).sum(axis=0)
    return out / (x.size * h * math.sqrt(2 * math.pi))


def beta_kde(x: np.ndarray, grid: np.ndarray, b: float) -> np.ndarray:
    """Beta-kernel estimator on [0, 1]; no mass leaks past the boundaries."""
    a = grid / b + 1.0
    c = (1.0 - grid) / b + 1.0
    xc = np.clip(x, 1e-12, 1 - 1e-12)
    out = np.zeros(grid.size)
    for chunk in np.array_split(xc, max(1, xc.size // 2048)):
        out += stats.beta.pdf(chunk[:, None], a[None, :], c[None, :]).sum(axis=0)
    return out / x.size


def _normalize(grid, dens):
    area = np.trapezoid(dens, grid) if hasattr(np, "trapezoid") else np.trapz(dens, grid)
    return dens / area if area > 0 else dens


def density_plot_data(sensitive_calib, sensitive_test, predictions_calib, predictions_test,
                      epsilon=None, bandwidth_policy="silverman", task="regression", **options) -> PlotSpec:
    """Per-group densities: one panel row per step, one column per attribute.

    ``bandwidth_policy`` is ``"silverman"`` or a fixed positive bandwidth. With
    ``task="binary"`` and scores inside [0, 1] a Beta kernel with smoothing
    ``n ** (-2/5)`` (or the fixed value) replaces the Gaussian one.
    """
    if task not in ("regression", "binary"):
        raise ValidationError("task must be 'regression' or 'binary'")
    if bandwidth_policy != "silverman" and not (isinstance(bandwidth_policy, (int, float)) and bandwidth_policy > 0):
        raise ValidationError("bandwidth_policy must be 'silverman' or a positive number")
    pipe = _Pipeline(sensitive_calib, sensitive_test, predictions_calib, predictions_test, epsilon, **options)
    trace = pipe.trace(pipe.attributes)
    warnings = []
    series = []
    for row, (stage, scores) in enumerate(trace.items()):
        use_beta = task == "binary" and scores.min() >= 0 and scores.max() <= 1
        for col, attr in enumerate(pipe.attributes):
            labels = pipe.test.column(attr)
            groups = {m: scores[labels == m] for m in sorted(set(labels))}
            usable = {}
            for m, g in groups.items():
                if g.size < 2:
                    warnings.append(f"{stage} / {attr}={m}: {g.size} point(s), curve omitted")
                else:
                    usable[m] = g
            if use_beta:
                bw = {m: (bandwidth_policy if bandwidth_policy != "silverman" else g.size ** -0.4)
                      for m, g in usable.items()}
                grid = np.linspace(0.0, 1.0, DENSITY_POINTS)
            else:
                bw = {m: (bandwidth_policy if bandwidth_policy != "silverman" else silverman_bandwidth(g))
                      for m, g in usable.items()}
                pad = 3 * max(bw.values()) if bw else 0.0
                pool = np.concatenate(list(usable.values())) if usable else scores
                grid = np.linspace(pool.min() - pad, pool.max() + pad, DENSITY_POINTS)
            curves = {}
            for m, g in usable.items():
                dens = beta_kde(g, grid, bw[m]) if use_beta else gaussian_kde(g, grid, bw[m])
                curves[m] = _normalize(grid, dens)
            series.append({
                "name": f"{stage} | {attr}",
                "stage": stage,
                "attribute": attr,
                "row": row,
                "col": col,
                "kernel": "beta" if use_beta else "gaussian",
                "x_label": "Prediction",
                "y_label": "Density",
                "grid": grid,
                "bandwidth": bw,
                "curves": curves,
            })
    meta = pipe.meta(pipe.attributes)
    meta.update({"rows": list(trace), "columns": pipe.attributes, "warnings": warnings, "task": task})
    return PlotSpec("density", _plain(series), _plain(meta))


def _waterfall_series(pipe: _Pipeline, order) -> dict:
    trace = pipe.trace(order)
    reports = [pipe.unfairness(s) for s in trace.values()]
    base = reports[0].total
    bars = [{"label": BASE_LABEL, "kind": "total", "value": base, "per_attribute": reports[0].per_attribute}]
    for attr, prev, cur in zip(order, reports[:-1], reports[1:]):
        delta = cur.total - prev.total
        bars.append({
            "label": attr,
            "kind": "delta",
            "value": delta,
            "epsilon": pipe.epsilon[attr],
            "percent_of_base": -100.0 * delta / base if base > 0 else 0.0,
            "per_attribute": cur.per_attribute,
        })
    bars.append({"label": "Final", "kind": "total", "value": reports[-1].total,
                 "per_attribute": reports[-1].per_attribute})
    return {"name": " -> ".join(order), "order": list(order), "x_label": "Correction step",
            "y_label": "Unfairness", "bars": bars}


def waterfall_plot_data(sensitive_calib, sensitive_test, predictions_calib, predictions_test,
                        epsilon=None, both_orders=False, **options) -> PlotSpec:
    """Base unfairness, the signed change at every step, and the residual."""
    pipe = _Pipeline(sensitive_calib, sensitive_test, predictions_calib, predictions_test, epsilon, **options)
    orders = [pipe.attributes]
    if both_orders and len(pipe.attributes) > 1:
        orders.append(pipe.attributes[::-1])
    series = [_waterfall_series(pipe, o) for o in orders]
    meta = pipe.meta(pipe.attributes)
    meta["orders"] = [list(o) for o in orders]
    return PlotSpec("waterfall", _plain(series), _plain(meta))


# -- rendering ---------------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")
_W, _H, _M = 640, 420, 56


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _scale(lo, hi, a, b):
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lambda v: a + (v - lo) * (b - a) / (hi - lo)


def _axes(out, x0, y0, x1, y1, xlabel, ylabel, lim_x, lim_y):
    out.append(f'<rect x="{_fmt(x0)}" y="{_fmt(y1)}" width="{_fmt(x1 - x0)}" height="{_fmt(y0 - y1)}" '
               'fill="none" stroke="#444" stroke-width="1"/>')
    out.append(f'<text x="{_fmt((x0 + x1) / 2)}" y="{_fmt(y0 + 32)}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="{_fmt(x0 - 40)}" y="{_fmt((y0 + y1) / 2)}" text-anchor="middle" '
               f'transform="rotate(-90 {_fmt(x0 - 40)} {_fmt((y0 + y1) / 2)})">{escape(ylabel)}</text>')
    for v, pos in ((lim_x[0], x0), (lim_x[1], x1)):
        out.append(f'<text x="{_fmt(pos)}" y="{_fmt(y0 + 14)}" text-anchor="middle" class="tick">{v:.3g}</text>')
    for v, pos in ((lim_y[0], y0), (lim_y[1], y1)):
        out.append(f'<text x="{_fmt(x0 - 4)}" y="{_fmt(pos)}" text-anchor="end" class="tick">{v:.3g}</text>')


def _svg_arrows(spec: PlotSpec, out):
    pts = [p for s in spec.series for p in s["points"]]
    xs = [p["unfairness"] for p in pts]
    ys = [p["performance"] for p in pts]
    fx = _scale(min(xs), max(xs), _M, _W - _M)
    fy = _scale(min(ys), max(ys), _H - _M, _M)
    s0 = spec.series[0]
    _axes(out, _M, _H - _M, _W - _M, _M, s0["x_label"], s0["y_label"], (min(xs), max(xs)), (min(ys), max(ys)))
    for k, s in enumerate(spec.series):
        color = _PALETTE[k % len(_PALETTE)]
        p = s["points"]
        for i, j in s["edges"]:
            out.append(f'<line x1="{_fmt(fx(p[i]["unfairness"]))}" y1="{_fmt(fy(p[i]["performance"]))}" '
                       f'x2="{_fmt(fx(p[j]["unfairness"]))}" y2="{_fmt(fy(p[j]["performance"]))}" '
                       f'stroke="{color}" stroke-width="1.5" marker-end="url(#head)"/>')
        for q in p:
            out.append(f'<circle class="marker" cx="{_fmt(fx(q["unfairness"]))}" cy="{_fmt(fy(q["performance"]))}" '
                       f'r="4" fill="{color}"><title>{escape(s["name"])}: {escape(q["stage"])}</title></circle>')
        out.append(f'<text x="{_fmt(_W - _M)}" y="{_fmt(_M - 24 + 12 * k)}" text-anchor="end" '
                   f'fill="{color}">{escape(s["name"])}</text>')


def _svg_density(spec: PlotSpec, out):
    nrows = len(spec.meta.get("rows", [])) or 1 + max(s["row"] for s in spec.series)
    ncols = len(spec.meta.get("columns", [])) or 1 + max(s["col"] for s in spec.series)
    pw, ph = (_W - _M) / ncols, (_H - _M) / nrows
    for s in spec.series:
        x0, y1 = _M / 2 + s["col"] * pw + 8, _M / 2 + s["row"] * ph + 14
        x1, y0 = x0 + pw - 16, y1 + ph - 28
        grid = s["grid"]
        top = max([max(c) for c in s["curves"].values()] or [1.0])
        fx = _scale(grid[0], grid[-1], x0, x1)
        fy = _scale(0.0, top, y0, y1)
        out.append(f'<rect x="{_fmt(x0)}" y="{_fmt(y1)}" width="{_fmt(x1 - x0)}" height="{_fmt(y0 - y1)}" '
                   'fill="none" stroke="#444" stroke-width="0.8"/>')
        out.append(f'<text x="{_fmt(x0)}" y="{_fmt(y1 - 3)}" class="tick">{escape(s["name"])}</text>')
        for k, (m, curve) in enumerate(sorted(s["curves"].items())):
            pts = " ".join(f"{_fmt(fx(g))},{_fmt(fy(d))}" for g, d in zip(grid, curve))
            out.append(f'<polyline class="curve" points="{pts}" fill="none" '
                       f'stroke="{_PALETTE[k % len(_PALETTE)]}" stroke-width="1"><title>{escape(m)}</title></polyline>')


def _svg_waterfall(spec: PlotSpec, out):
    n = len(spec.series)
    width = (_W - _M) / n
    for k, s in enumerate(spec.series):
        x0, x1 = _M + k * width, _M + (k + 1) * width - 12
        levels, running = [], 0.0
        for b in s["bars"]:
            if b["kind"] == "total":
                levels.append((0.0, b["value"]))
                running = b["value"]
            else:
                levels.append((running, running + b["value"]))
                running += b["value"]
        top = max(max(a, c) for a, c in levels) or 1.0
        fy = _scale(0.0, top, _H - _M, _M)
        _axes(out, x0, _H - _M, x1, _M, s["x_label"], s["y_label"], (0, len(levels)), (0.0, top))
        bw = (x1 - x0) / len(levels)
        for i, (b, (lo, hi)) in enumerate(zip(s["bars"], levels)):
            color = "#555" if b["kind"] == "total" else ("#2ca02c" if hi < lo else "#d62728")
            ya, yb = sorted((fy(lo), fy(hi)))
            out.append(f'<rect class="bar" x="{_fmt(x0 + i * bw + 3)}" y="{_fmt(ya)}" width="{_fmt(bw - 6)}" '
                       f'height="{_fmt(max(yb - ya, 0.5))}" fill="{color}"/>')
            note = f"{b['value']:.3f}"
            if b["kind"] == "delta":
                note += f" (eps={b['epsilon']:g}, {b['percent_of_base']:.0f}%)"
            out.append(f'<text x="{_fmt(x0 + (i + 0.5) * bw)}" y="{_fmt(ya - 4)}" text-anchor="middle" '
                       f'class="tick">{escape(note)}</text>')
            out.append(f'<text x="{_fmt(x0 + (i + 0.5) * bw)}" y="{_fmt(_H - _M + 14)}" text-anchor="middle" '
                       f'class="tick">{escape(b["label"])}</text>')
        out.append(f'<text x="{_fmt((x0 + x1) / 2)}" y="{_fmt(_M - 20)}" text-anchor="middle">{escape(s["name"])}</text>')


def render(spec: PlotSpec, format: str = "json") -> str:
    """Serialize ``spec`` as JSON or draw it as a static SVG 1.1 document."""
    if spec.kind not in KINDS:
        raise ValidationError(f"unknown plot kind {spec.kind!r}")
    if format == "json":
        return json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n"
    if format != "svg":
        raise ValidationError(f"unknown format {format!r}; expected 'json' or 'svg'")
    out = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg version="1.1" xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="DejaVu Sans, sans-serif" font-size="11">',
        '<defs><marker id="head" markerWidth="8" markerHeight="8" refX="7" refY="4" orient="auto">'
        '<path d="M0,0 L8,4 L0,8 z" fill="#333"/></marker>'
        '<style>.tick{font-size:9px;fill:#333}</style></defs>',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
    ]
    if spec.kind in ("arrow", "multiple_arrow"):
        _svg_arrows(spec, out)
    elif spec.kind == "density":
        _svg_density(spec, out)
    else:
        _svg_waterfall(spec, out)
    out.append("</svg>")
    return "\n".join(out) + "\n"
