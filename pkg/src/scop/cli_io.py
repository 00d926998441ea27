"""Strict CSV ingestion and deterministic CSV/JSON result serialization.

Reading is strict: a header row is mandatory, every row must have the
header's width, and every data cell must parse as a finite real; violations
raise DataError naming the file, row, and column. Writing is deterministic:
floats carry 17 significant digits (enough to round-trip a double exactly),
JSON keys appear in a fixed documented order, and line endings are always
"\\n", so identical inputs produce byte-identical files.

Result files:
  CSV    one row per (repetition, method) with columns
         rep,method,fcp,avg_length,n_selected,infinite_flag, followed by one
         summary row per method reusing the same columns (rep = "summary",
         fcp = FCR, avg_length = mean length over finite repetitions,
         n_selected = mean selection size, infinite_flag = count of
         repetitions with an infinite interval). An empty-selection
         repetition keeps fcp = 0 and leaves avg_length empty; an infinite
         repetition writes "inf".
  JSON   the full experiment result: version, config echo (including the
         master seed), per-method summaries, selection FDR when defined,
         failed repetitions, and every per-repetition record. avg_length is
         null when the selection was empty or the average infinite; the
         "infinite" flag distinguishes the two.

Unit-level files (external-data runs) use columns y,mu_hat,t_score for
calibration units and mu_hat,t_score plus optional y for test units, so a
dumped file can be re-ingested in precomputed mode and reproduce the same
coverage evaluation exactly.
"""

from __future__ import annotations

import csv
import io
import math
from importlib.metadata import PackageNotFoundError, version as _dist_version
from typing import Mapping, Sequence

import numpy as np

from .intervals import METHODS, Intervals
from .metrics import MethodSummary
from .predictors import Dataset, ScoredUnits
from .selection import format_rule
from .simulate import ExperimentConfig, ExperimentResult, RepRecord

try:
    VERSION = _dist_version("scop")
except PackageNotFoundError:  # running from a source tree without metadata
    VERSION = "0.0.0"


class DataError(Exception):
    """A problem with external data or result files (CLI exit code 3)."""


# --------------------------------------------------------------------------
# float formatting


def format_float(value: float) -> str:
    """17-significant-digit decimal form; round-trips any finite double."""
    return "%.17g" % value


def _csv_cell(value: float | int | str | None) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format_float(float(value))


# --------------------------------------------------------------------------
# strict table reading


def _parse_cell(text: str, path: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(
            f"{path}: row {row}, column {column!r}: not a number: {text!r}"
        ) from None
    if not math.isfinite(value):
        raise DataError(f"{path}: row {row}, column {column!r}: not finite: {text!r}")
    return value


def read_table(path: str) -> tuple[list[str], np.ndarray]:
    """(header, rows) from a strict numeric CSV file.

    Row numbers in errors are 1-based file lines (the header is line 1).
    """
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from None
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file (a header row is mandatory)") from None
        header = [name.strip() for name in header]
        if any(not name for name in header):
            raise DataError(f"{path}: header has an empty column name")
        if len(set(header)) != len(header):
            raise DataError(f"{path}: header has duplicate column names")
        rows: list[list[float]] = []
        for line, raw in enumerate(reader, start=2):
            if len(raw) != len(header):
                raise DataError(
                    f"{path}: row {line}: expected {len(header)} columns, got {len(raw)}"
                )
            rows.append(
                [
                    _parse_cell(cell.strip(), path, line, name)
                    for name, cell in zip(header, raw)
                ]
            )
    if not rows:
        raise DataError(f"{path}: no data rows")
    return header, np.array(rows, dtype=float)


def _feature_columns(header: list[str], path: str) -> list[int]:
    """Indices of x1..xd in header order; the names must be exactly that."""
    feature_idx = [i for i, name in enumerate(header) if name not in ("y", "mu_hat", "t_score")]
    expected = [f"x{k}" for k in range(1, len(feature_idx) + 1)]
    got = [header[i] for i in feature_idx]
    if got != expected:
        raise DataError(
            f"{path}: feature columns must be named x1..x{len(feature_idx)} in order, got {got}"
        )
    if not feature_idx:
        raise DataError(f"{path}: no feature columns (x1..xd) found")
    return feature_idx


def load_labeled_csv(path: str) -> Dataset:
    """Labeled rows (y, x1..xd) as a Dataset."""
    header, rows = read_table(path)
    if "y" not in header:
        raise DataError(f"{path}: labeled data needs a 'y' column")
    for forbidden in ("mu_hat", "t_score"):
        if forbidden in header:
            raise DataError(f"{path}: column {forbidden!r} belongs to precomputed files")
    features = _feature_columns(header, path)
    return Dataset(x=rows[:, features], y=rows[:, header.index("y")])


def load_test_csv(path: str) -> tuple[np.ndarray, np.ndarray | None]:
    """Test rows (x1..xd, optional y) as (features, responses-or-None)."""
    header, rows = read_table(path)
    for forbidden in ("mu_hat", "t_score"):
        if forbidden in header:
            raise DataError(f"{path}: column {forbidden!r} belongs to precomputed files")
    features = _feature_columns(header, path)
    y = rows[:, header.index("y")] if "y" in header else None
    return rows[:, features], y


def load_precomputed_csv(path: str, require_y: bool) -> ScoredUnits:
    """Precomputed rows (y?, mu_hat, t_score) as scored units."""
    header, rows = read_table(path)
    for required in ("mu_hat", "t_score"):
        if required not in header:
            raise DataError(f"{path}: precomputed data needs a {required!r} column")
    extras = [name for name in header if name not in ("y", "mu_hat", "t_score")]
    if extras:
        raise DataError(f"{path}: unexpected columns in precomputed data: {extras}")
    if require_y and "y" not in header:
        raise DataError(f"{path}: calibration units need a 'y' column")
    mu_hat = rows[:, header.index("mu_hat")]
    t_score = rows[:, header.index("t_score")]
    if "y" in header:
        y = rows[:, header.index("y")]
        residual = np.abs(y - mu_hat)
    else:
        y = None
        residual = None
    return ScoredUnits(
        index=np.arange(rows.shape[0]),
        mu_hat=mu_hat,
        t_score=t_score,
        residual_score=residual,
        response=y,
    )


# --------------------------------------------------------------------------
# dataset / unit writing


def write_text(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from None


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[float | int | str | None]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_csv_cell(cell) for cell in row])
    return out.getvalue()


def write_dataset_csv(path: str, x: np.ndarray, y: np.ndarray | None = None) -> None:
    """Feature rows, optionally labeled, in the layout load_*_csv reads."""
    x = np.asarray(x, dtype=float)
    header = [f"x{k}" for k in range(1, x.shape[1] + 1)]
    rows: list[list[float]] = [list(row) for row in x]
    if y is not None:
        header = ["y", *header]
        rows = [[float(yi), *row] for yi, row in zip(np.asarray(y, dtype=float), rows)]
    write_text(path, _csv_text(header, rows))


def write_units_csv(path: str, units: ScoredUnits) -> None:
    """Unit scores in the precomputed layout (y first when present)."""
    header = ["mu_hat", "t_score"]
    columns = [units.mu_hat, units.t_score]
    if units.response is not None:
        header = ["y", *header]
        columns = [units.response, *columns]
    rows = list(zip(*columns))
    write_text(path, _csv_text(header, rows))


def write_intervals_csv(
    path: str,
    intervals_by_method: Mapping[str, Intervals],
    y: np.ndarray | None = None,
) -> None:
    """Per-unit prediction intervals, one row per (method, selected unit).

    Columns: unit,method,lo,hi plus y,covered when responses are known.
    """
    header = ["unit", "method", "lo", "hi"]
    if y is not None:
        header += ["y", "covered"]
    rows: list[list[float | int | str]] = []
    for method in METHODS:
        if method not in intervals_by_method:
            continue
        ivs = intervals_by_method[method]
        for unit, lo, hi in zip(ivs.unit, ivs.lo, ivs.hi):
            row: list[float | int | str] = [int(unit), method, float(lo), float(hi)]
            if y is not None:
                yi = float(y[int(unit)])
                row += [yi, int(lo <= yi <= hi)]
            rows.append(row)
    write_text(path, _csv_text(header, rows))


# --------------------------------------------------------------------------
# result writing


def _ordered_methods(record_methods: Mapping[str, object]) -> list[str]:
    return [m for m in METHODS if m in record_methods]


def results_csv(result: ExperimentResult) -> str:
    """CSV text: per-repetition rows then one summary row per method."""
    rows: list[list[float | int | str | None]] = []
    for record in result.records:
        for method in _ordered_methods(record.methods):
            rep = record.methods[method]
            rows.append(
                [record.rep, method, rep.fcp, rep.avg_length, record.n_selected, int(rep.infinite)]
            )
    for summary in result.summaries:
        rows.append(
            [
                "summary",
                summary.method,
                summary.fcr,
                summary.mean_length,
                summary.mean_selected,
                summary.infinite_rep_count,
            ]
        )
    return _csv_text(["rep", "method", "fcp", "avg_length", "n_selected", "infinite_flag"], rows)


def _json_scalar(value: object) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            return "null"
        return format_float(value)
    if isinstance(value, str):
        out = ['"']
        for ch in value:
            if ch in '"\\':
                out.append("\\" + ch)
            elif ord(ch) < 0x20:
                out.append("\\u%04x" % ord(ch))
            else:
                out.append(ch)
        out.append('"')
        return "".join(out)
    raise TypeError(f"not serializable: {value!r}")


def _json_render(value: object, indent: int, out: list[str]) -> None:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(value, dict):
        if not value:
            out.append("{}")
            return
        out.append("{\n")
        for i, (key, item) in enumerate(value.items()):
            out.append(f"{inner}{_json_scalar(str(key))}: ")
            _json_render(item, indent + 1, out)
            out.append(",\n" if i < len(value) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(value, (list, tuple)):
        if not value:
            out.append("[]")
            return
        out.append("[\n")
        for i, item in enumerate(value):
            out.append(inner)
            _json_render(item, indent + 1, out)
            out.append(",\n" if i < len(value) - 1 else "\n")
        out.append(pad + "]")
    else:
        out.append(_json_scalar(value))


def dumps_json(tree: dict) -> str:
    out: list[str] = []
    _json_render(tree, 0, out)
    out.append("\n")
    return "".join(out)


def _config_tree(config: ExperimentConfig) -> dict:
    return {
        "scenario": config.scenario,
        "rule": format_rule(config.rule),
        "n_train": config.n_train,
        "n_cal": config.n_cal,
        "m": config.m,
        "alpha": config.alpha,
        "methods": list(config.methods),
        "score": config.score,
        "reps": config.reps,
        "master_seed": config.seed,
        "fixed_beta": config.fixed_beta,
        "acp_simple": config.acp_simple,
    }


def _summary_tree(summary: MethodSummary) -> dict:
    return {
        "method": summary.method,
        "fcr": summary.fcr,
        "fcr_se": summary.fcr_se,
        "mean_length": summary.mean_length,
        "infinite_rep_count": summary.infinite_rep_count,
        "mean_selected": summary.mean_selected,
        "n_reps": summary.n_reps,
    }


def _record_tree(record: RepRecord) -> dict:
    methods = {}
    for method in _ordered_methods(record.methods):
        rep = record.methods[method]
        methods[method] = {
            "fcp": rep.fcp,
            "avg_length": rep.avg_length,
            "infinite": rep.infinite,
        }
    return {
        "rep": record.rep,
        "n_selected": record.n_selected,
        "fdp": record.fdp,
        "flags": list(record.flags),
        "methods": methods,
    }


def result_tree(result: ExperimentResult) -> dict:
    """The JSON structure of a result, keys in the documented order."""
    return {
        "version": VERSION,
        "config": _config_tree(result.config),
        "summaries": [_summary_tree(s) for s in result.summaries],
        "fdr": result.fdr,
        "failed_reps": [{"rep": rep, "error": msg} for rep, msg in result.failed],
        "records": [_record_tree(r) for r in result.records],
    }


def results_json(result: ExperimentResult) -> str:
    return dumps_json(result_tree(result))


def write_results(result: ExperimentResult, path: str, format: str = "csv") -> None:
    """Serialize one experiment to path as "csv" or "json"."""
    if format == "csv":
        write_text(path, results_csv(result))
    elif format == "json":
        write_text(path, results_json(result))
    else:
        raise ValueError(f"unknown format {format!r} (known: csv, json)")


def sweep_csv(values: Sequence[object], results: Sequence[ExperimentResult]) -> str:
    """Grid summary: one row per (grid value, method) of summary statistics."""
    rows: list[list[float | int | str | None]] = []
    for value, result in zip(values, results):
        label = ",".join(str(v) for v in value) if isinstance(value, (tuple, list)) else str(value)
        for summary in result.summaries:
            rows.append(
                [
                    label,
                    summary.method,
                    summary.fcr,
                    summary.fcr_se,
                    summary.mean_length,
                    summary.mean_selected,
                    summary.infinite_rep_count,
                ]
            )
    header = ["value", "method", "fcr", "fcr_se", "mean_length", "mean_selected", "infinite_reps"]
    return _csv_text(header, rows)


def sweep_json(param: str, values: Sequence[object], results: Sequence[ExperimentResult]) -> str:
    points = []
    for value, result in zip(values, results):
        label = ",".join(str(v) for v in value) if isinstance(value, (tuple, list)) else str(value)
        points.append({"value": label, "result": result_tree(result)})
    return dumps_json({"version": VERSION, "param": param, "points": points})
