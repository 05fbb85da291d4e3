"""Command-line front end: calibrate, apply, audit, decompose, plot, synth.

Exit codes: 0 ok, 2 schema/validation, 3 degenerate input, 4 unseen
modality, 5 I/O or unparseable CSV.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import metrics, plots
from .calibration import (
    DEFAULT_SEED,
    DEFAULT_SIGMA,
    MsaCalibrator,
    SensitiveFrame,
    epsilon_vector,
    load_calibrator,
    save_calibrator,
)
from .distributions import DEFAULT_GRID_SIZE
from .errors import DegenerateInputError, EquifairError, SchemaError, UnknownModalityError, ValidationError
from .synthetic import make_synthetic

EXIT_OK, EXIT_VALIDATION, EXIT_DEGENERATE, EXIT_MODALITY, EXIT_IO = 0, 2, 3, 4, 5
SEED_ENV = "EQUIFAIR_SEED"


class CsvFormatError(EquifairError, OSError):
    """The input file is not a well-formed CSV table."""


# -- configuration -----------------------------------------------------------

@dataclass
class RunConfig:
    sigma: float = DEFAULT_SIGMA
    seed: Optional[int] = DEFAULT_SEED
    grid_size: int = DEFAULT_GRID_SIZE
    epsilon: Optional[List[float]] = None
    metric: str = "mse"
    threshold: Optional[float] = None
    method: str = "grid"
    pred_col: Optional[str] = None
    sensitive_cols: Optional[List[str]] = None
    label_col: Optional[str] = None

    def validate(self, r: Optional[int] = None):
        if self.grid_size < 2:
            raise ValidationError(f"grid_size must be at least 2, got {self.grid_size}")
        if self.method not in metrics.METHODS:
            raise ValidationError(f"method must be one of {metrics.METHODS}")
        if self.metric not in metrics.METRICS:
            raise ValidationError(f"metric must be one of {metrics.METRICS}")
        if self.seed is not None and self.seed < 0:
            raise ValidationError("seed must be non-negative")
        if r is not None:
            self.epsilon = epsilon_vector(self.epsilon, r)
        return self


_CONFIG_KEYS = {"sigma", "seed", "grid_size", "epsilon", "metric", "threshold", "method",
                "pred_col", "sensitive_cols", "label_col"}


def _split_list(text):
    if text is None:
        return None
    if isinstance(text, list):
        return [str(t).strip() for t in text]
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _float_list(text):
    items = _split_list(text)
    if items is None:
        return None
    try:
        return [float(t) for t in items]
    except ValueError:
        raise ValidationError(f"epsilon must be a comma-separated list of numbers, got {text!r}") from None


def _maybe_number(value, cast, name):
    if value is None:
        return None
    try:
        return cast(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be a number, got {value!r}") from None


def build_config(args: argparse.Namespace, env=None) -> RunConfig:
    """Merge built-in defaults < config file < EQUIFAIR_SEED < command-line flags."""
    env = os.environ if env is None else env
    cfg = RunConfig()
    if getattr(args, "config", None):
        doc = _read_json(args.config, "config")
        if not isinstance(doc, dict):
            raise SchemaError("config file must hold a JSON object")
        unknown = set(doc) - _CONFIG_KEYS
        if unknown:
            raise SchemaError(f"unknown config keys: {sorted(unknown)}")
        for key, value in doc.items():
            setattr(cfg, key, value)
    if env.get(SEED_ENV, "").strip():
        cfg.seed = _maybe_number(env[SEED_ENV].strip(), int, SEED_ENV)
    for key in ("sigma", "seed", "grid_size", "metric", "threshold", "method", "pred_col", "label_col"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "sensitive_cols", None) is not None:
        cfg.sensitive_cols = args.sensitive_cols
    if getattr(args, "epsilon", None) is not None:
        cfg.epsilon = args.epsilon
    cfg.sigma = _maybe_number(cfg.sigma, float, "sigma")
    cfg.seed = _maybe_number(cfg.seed, int, "seed")
    cfg.grid_size = _maybe_number(cfg.grid_size, int, "grid_size")
    cfg.threshold = _maybe_number(cfg.threshold, float, "threshold")
    cfg.sensitive_cols = _split_list(cfg.sensitive_cols)
    cfg.epsilon = _float_list(cfg.epsilon)
    return cfg.validate()


# -- I/O ---------------------------------------------------------------------

def _read_json(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{what} file {path} is not valid JSON: {exc}") from None


@dataclass
class Table:
    header: List[str]
    rows: List[List[str]]

    def column(self, name: str) -> List[str]:
        if name not in self.header:
            raise SchemaError(f"missing column {name!r}; file has {self.header}")
        j = self.header.index(name)
        return [r[j] for r in self.rows]

    def floats(self, name: str) -> np.ndarray:
        out = np.empty(len(self.rows))
        for i, raw in enumerate(self.column(name)):
            try:
                out[i] = float(raw)
            except ValueError:
                raise ValidationError(f"row {i + 1}, column {name!r}: cannot parse {raw!r} as a number") from None
            if not np.isfinite(out[i]):
                raise ValidationError(f"row {i + 1}, column {name!r}: non-finite value {raw!r}")
        return out

    def sensitive(self, names: List[str]) -> SensitiveFrame:
        cols = [self.column(n) for n in names]
        for n, col in zip(names, cols):
            for i, v in enumerate(col):
                if not v.strip():
                    raise ValidationError(f"row {i + 1}, column {n!r}: missing sensitive value")
        return SensitiveFrame(tuple(names), np.array(cols, dtype=object).T.reshape(len(self.rows), len(names)))


def read_csv(path) -> Table:
    """Read a headed UTF-8 CSV file; every row must have the header's width."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh, strict=True)
            try:
                header = next(reader)
            except StopIteration:
                raise CsvFormatError(f"{path}: empty file, expected a header row") from None
            header = [h.strip() for h in header]
            if len(set(header)) != len(header):
                raise SchemaError(f"{path}: duplicated column names in header {header}")
            rows = []
            for row in reader:
                if not row:
                    continue
                if len(row) != len(header):
                    raise CsvFormatError(
                        f"{path}: row {reader.line_num - 1} has {len(row)} fields, header has {len(header)}"
                    )
                rows.append(row)
    except UnicodeDecodeError as exc:
        raise CsvFormatError(f"{path}: not valid UTF-8 ({exc.reason})") from None
    except csv.Error as exc:
        raise CsvFormatError(f"{path}: line {reader.line_num}: {exc}") from None
    return Table(header, rows)


def _atomic_write(path, text: str):
    """Write ``text`` to ``path`` via a temporary file so no partial output survives."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".equifair-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out):
    if out:
        _atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _csv_text(header, rows) -> str:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _need(value, flag):
    if not value:
        raise ValidationError(f"{flag} is required")
    return value


# -- commands ----------------------------------------------------------------

def cmd_calibrate(args) -> int:
    cfg = build_config(args)
    table = read_csv(args.data)
    names = _need(cfg.sensitive_cols, "--sensitive-cols")
    frame = table.sensitive(names)
    y = table.floats(_need(cfg.pred_col, "--pred-col"))
    cal = MsaCalibrator(cfg.sigma, cfg.seed).fit(y, frame)
    doc = save_calibrator(cal)
    _atomic_write(_need(args.out, "--out"), _dump(doc))
    for stage in cal.stages:
        for mod, g in stage.groups.items():
            print(f"{stage.attribute}\t{mod}\tn={g.dist.n}\tweight={g.weight:.6g}")
    return EXIT_OK


def _load_model(path) -> MsaCalibrator:
    cal = load_calibrator(_read_json(path, "model"))
    if not isinstance(cal, MsaCalibrator):
        stage = cal
        cal = MsaCalibrator(stage.sigma, stage.seed, stage.interpolation)
        cal.stages = [stage]
    return cal


def _model_inputs(args):
    cfg = build_config(args)
    cal = _load_model(args.model)
    table = read_csv(args.data)
    names = cfg.sensitive_cols or cal.attributes
    if sorted(names) != sorted(cal.attributes):
        raise ValidationError(f"sensitive columns {names} do not match model stages {cal.attributes}")
    frame = table.sensitive(cal.attributes)
    y = table.floats(_need(cfg.pred_col, "--pred-col"))
    cfg.validate(len(cal.stages))
    try:
        trace = cal.transform_trace(y, frame, cfg.epsilon, seed=cfg.seed)
    except UnknownModalityError as exc:
        # library rows are 0-based; CSV messages count data rows from 1
        raise UnknownModalityError(exc.attribute, exc.value, exc.row + 1) from None
    return cfg, cal, table, frame, trace


def cmd_apply(args) -> int:
    _, cal, table, _, trace = _model_inputs(args)
    extra = ["fair_pred"] + [f"fair_after_{a}" for a in cal.attributes]
    for name in extra:
        if name in table.header:
            raise SchemaError(f"input already has a column named {name!r}")
    final = trace[cal.attributes[-1]]
    stages = [trace[a] for a in cal.attributes]
    rows = [row + [repr(float(final[i]))] + [repr(float(s[i])) for s in stages]
            for i, row in enumerate(table.rows)]
    _atomic_write(_need(args.out, "--out"), _csv_text(table.header + extra, rows))
    return EXIT_OK


def cmd_audit(args) -> int:
    cfg = build_config(args)
    table = read_csv(args.data)
    frame = table.sensitive(_need(cfg.sensitive_cols, "--sensitive-cols"))
    y = table.floats(_need(cfg.pred_col, "--pred-col"))
    report = metrics.unfairness(y, frame, cfg.method, cfg.grid_size)
    doc = {"unfairness": report.to_dict(), "n": int(y.size)}
    if cfg.label_col:
        t = table.floats(cfg.label_col)
        doc["performance"] = {"metric": cfg.metric, "threshold": cfg.threshold,
                              "value": metrics.performance(t, y, cfg.metric, cfg.threshold)}
    _emit(_dump(doc), args.out)
    return EXIT_OK


def cmd_decompose(args) -> int:
    cfg, _, _, frame, trace = _model_inputs(args)
    table = metrics.decompose(trace, frame, cfg.method, cfg.grid_size)
    doc = table.to_dict()
    doc["epsilon"] = cfg.epsilon
    _emit(_dump(doc), args.out)
    return EXIT_OK


def cmd_plot(args) -> int:
    cfg = build_config(args)
    names = _need(cfg.sensitive_cols, "--sensitive-cols")
    pred = _need(cfg.pred_col, "--pred-col")
    calib, test = read_csv(args.calib), read_csv(args.data)
    inputs = (calib.sensitive(names), test.sensitive(names), calib.floats(pred), test.floats(pred))
    cfg.validate(len(names))
    options = dict(sigma=cfg.sigma, seed=cfg.seed, method=cfg.method, grid_size=cfg.grid_size)
    if args.kind in ("arrow", "multiple_arrow"):
        if not cfg.label_col:
            raise ValidationError(f"{args.kind} plots need --label-col for the performance axis")
        labels = test.floats(cfg.label_col)
        build = plots.arrow_plot_data if args.kind == "arrow" else plots.multiple_arrow_plot_data
        spec = build(*inputs, labels, cfg.epsilon, metric=cfg.metric, threshold=cfg.threshold, **options)
    elif args.kind == "density":
        bandwidth = "silverman" if args.bandwidth is None else args.bandwidth
        spec = plots.density_plot_data(*inputs, cfg.epsilon, bandwidth_policy=bandwidth, task=args.task, **options)
    else:
        spec = plots.waterfall_plot_data(*inputs, cfg.epsilon, both_orders=args.both_orders, **options)
    _emit(plots.render(spec, args.format), args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    seed = build_config(args).seed
    data = make_synthetic(args.n, seed=seed, agreement=args.agreement)
    rows = [[repr(float(s)), repr(float(t)), str(int(a)), str(int(b))]
            for s, t, (a, b) in zip(data.scores, data.labels, data.sensitive)]
    _emit(_csv_text(["pred", "label", *data.attributes], rows), args.out)
    return EXIT_OK


# -- parser ------------------------------------------------------------------

_EPILOG = (
    f"Environment: {SEED_ENV} sets the jitter seed when --seed is not given; it overrides\n"
    "the config file. Precedence: flags > EQUIFAIR_SEED > --config JSON > defaults\n"
    f"(sigma {DEFAULT_SIGMA}, seed {DEFAULT_SEED}, grid {DEFAULT_GRID_SIZE}, epsilon 0, metric mse, method grid).\n"
    "Exit codes: 0 ok, 2 schema/validation, 3 degenerate input, 4 unseen modality, 5 I/O."
)


def _common(p, model=False, labels=False, metric=False):
    p.add_argument("--pred-col", help="prediction column")
    p.add_argument("--sensitive-cols", help="comma-separated sensitive columns, in correction order")
    if labels:
        p.add_argument("--label-col", help="label column for the performance axis")
    p.add_argument("--sigma", type=float, help="jitter scale")
    p.add_argument("--seed", type=int, help=f"jitter seed (else ${SEED_ENV})")
    p.add_argument("--grid-size", type=int, help="quantile grid size for the grid method")
    p.add_argument("--method", choices=metrics.METHODS, help="unfairness estimator")
    p.add_argument("--config", help="JSON file with defaults for any of these options")
    p.add_argument("--out", help="output path (stdout when omitted, where allowed)")
    if model:
        p.add_argument("--model", required=True, help="model JSON written by calibrate")
    if metric:
        p.add_argument("--metric", choices=metrics.METRICS, help="performance metric")
        p.add_argument("--threshold", type=float, help="decision threshold for accuracy")
    p.add_argument("--epsilon", help="comma-separated per-attribute epsilon in [0, 1]")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="equifair",
        description="Wasserstein post-processing for demographic parity.",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="fit a calibrator on calibration data", epilog=_EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("data", help="calibration CSV")
    _common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("apply", help="write fair_pred and per-step columns", epilog=_EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("data", help="test CSV")
    _common(p, model=True)
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("audit", help="report unfairness (and performance)", epilog=_EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("data", help="CSV with predictions and sensitive columns")
    _common(p, labels=True, metric=True)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("decompose", help="per-step, per-attribute unfairness table", epilog=_EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("data", help="test CSV")
    _common(p, model=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("plot", help="emit plot data as JSON or SVG", epilog=_EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("kind", choices=plots.KINDS)
    p.add_argument("--calib", required=True, help="calibration CSV")
    p.add_argument("--data", required=True, help="test CSV")
    _common(p, labels=True, metric=True)
    p.add_argument("--format", choices=("json", "svg"), default="json")
    p.add_argument("--both-orders", action="store_true", help="waterfall: add the reversed order")
    p.add_argument("--task", choices=("regression", "binary"), default="regression")
    p.add_argument("--bandwidth", type=float, help="density: fixed bandwidth instead of Silverman")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("synth", help="write a synthetic dataset with two correlated attributes", epilog=_EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--agreement", type=float, default=0.6, help="P(a2 == a1)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)
    return parser


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, UnknownModalityError):
        return EXIT_MODALITY
    if isinstance(exc, DegenerateInputError):
        return EXIT_DEGENERATE
    if isinstance(exc, ValidationError):
        return EXIT_VALIDATION
    return EXIT_IO


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (EquifairError, OSError) as exc:
        print(f"equifair: error: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
