"""CSV and JSON formats read and written by the command-line tool.

Calibration CSV: header ``class,y1[,y2,...]``, one record per line.
Output CSV: ``y1[,y2,...]`` columns, optionally ``class`` and per-row
utility columns ``u_<decision>_<class>``; any other columns are carried
through untouched. Utility and confusion matrices are plain row-major
numeric CSV blocks without a header (``#`` starts a comment line).
Models are versioned JSON documents, gzip-compressed when the file name
ends in ``.gz``.
"""

from __future__ import annotations

import csv
import gzip
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, ParseError, VersionMismatchError
from .model import CalibrationSet, TransducerModel

MODEL_FORMAT = "probtransducer-model"
MODEL_FORMAT_VERSION = 1

_Y_COLUMN = re.compile(r"^y(\d+)$")
_U_COLUMN = re.compile(r"^u_(\d+)_(\d+)$")
DERIVED_COLUMNS = re.compile(r"^(p_\d+|decision|tie)$")


def _parse_float(text, line, column):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"column {column!r}: not a number: {text!r}", line) from None
    if not np.isfinite(value):
        raise ParseError(f"column {column!r}: non-finite value {text!r}", line)
    return value


def _parse_class(text, line):
    try:
        value = int(text)
    except ValueError:
        raise ParseError(f"class label {text!r} is not an integer", line) from None
    if value < 0:
        raise ParseError(f"negative class label {value}", line)
    return value


def _y_columns(header) -> list[int]:
    """Positions of y1..yd in ``header``; they must be contiguous from y1."""
    found = {}
    for pos, name in enumerate(header):
        m = _Y_COLUMN.match(name.strip())
        if m:
            found[int(m.group(1))] = pos
    if not found:
        raise ParseError("header has no y1 column", 1)
    if sorted(found) != list(range(1, len(found) + 1)):
        raise ParseError(f"output columns must be y1..y{len(found)}", 1)
    return [found[i] for i in range(1, len(found) + 1)]


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1) from None
        header = [h.strip() for h in header]
        rows = []
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", reader.line_num)
            rows.append((reader.line_num, [cell.strip() for cell in row]))
    return header, rows


def read_calibration_csv(path, n_classes: int | None = None) -> CalibrationSet:
    header, rows = _read_rows(path)
    if "class" not in header:
        raise ParseError("header has no class column", 1)
    cpos = header.index("class")
    ypos = _y_columns(header)
    classes = np.empty(len(rows), dtype=np.int64)
    outputs = np.empty((len(rows), len(ypos)))
    for i, (line, row) in enumerate(rows):
        classes[i] = _parse_class(row[cpos], line)
        if n_classes is not None and classes[i] >= n_classes:
            raise ParseError(f"unknown class label {classes[i]} for {n_classes} classes", line)
        outputs[i] = [_parse_float(row[p], line, header[p]) for p in ypos]
    return CalibrationSet(classes, outputs, n_classes=n_classes)


def write_calibration_csv(data: CalibrationSet, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["class"] + [f"y{j + 1}" for j in range(data.y_dim)])
        for c, y in zip(data.classes, data.outputs):
            writer.writerow([int(c)] + [repr(float(v)) for v in y])


@dataclass
class OutputTable:
    """Rows of classifier outputs plus whatever else the file carried."""

    header: list[str]
    rows: list[list[str]]
    outputs: np.ndarray
    classes: np.ndarray | None = None
    utilities: np.ndarray | None = None  # (n, decisions, classes)
    lines: list[int] = field(default_factory=list)


def read_outputs_csv(path, y_dim: int | None = None, n_classes: int | None = None) -> OutputTable:
    header, rows = _read_rows(path)
    ypos = _y_columns(header)
    if y_dim is not None and len(ypos) != y_dim:
        raise DimensionError(f"file has {len(ypos)} output columns, model expects {y_dim}")
    outputs = np.empty((len(rows), len(ypos)))
    for i, (line, row) in enumerate(rows):
        outputs[i] = [_parse_float(row[p], line, header[p]) for p in ypos]
    classes = None
    if "class" in header:
        cpos = header.index("class")
        classes = np.array([_parse_class(row[cpos], line) for line, row in rows], dtype=np.int64)
        if n_classes is not None:
            for (line, _), c in zip(rows, classes):
                if c >= n_classes:
                    raise ParseError(f"unknown class label {c} for {n_classes} classes", line)
    utilities = None
    ucols = {}
    for pos, name in enumerate(header):
        m = _U_COLUMN.match(name)
        if m:
            ucols[(int(m.group(1)), int(m.group(2)))] = pos
    if ucols:
        n_dec = max(i for i, _ in ucols) + 1
        n_cls = max(c for _, c in ucols) + 1
        if len(ucols) != n_dec * n_cls:
            raise ParseError("per-row utility columns must form a full u_<i>_<c> block", 1)
        if n_classes is not None and n_cls != n_classes:
            raise DimensionError(f"per-row utilities have {n_cls} classes, model has {n_classes}")
        utilities = np.empty((len(rows), n_dec, n_cls))
        for r, (line, row) in enumerate(rows):
            for (i, c), pos in ucols.items():
                utilities[r, i, c] = _parse_float(row[pos], line, header[pos])
    return OutputTable(header, [row for _, row in rows], outputs, classes, utilities,
                       [line for line, _ in rows])


def read_matrix_csv(path) -> np.ndarray:
    """Row-major numeric block; all rows must have equal length."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for number, text in enumerate(fh, start=1):
            text = text.strip()
            if not text or text.startswith("#"):
                continue
            fields = [f.strip() for f in text.split(",")]
            rows.append([_parse_float(f, number, f"entry {j + 1}") for j, f in enumerate(fields)])
            if len(rows[-1]) != len(rows[0]):
                raise ParseError("matrix rows differ in length", number)
    if not rows:
        raise ParseError("no matrix rows found")
    return np.array(rows, dtype=float)


def write_matrix_csv(matrix, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in np.atleast_2d(matrix):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                             for v in row])


def read_table(path) -> tuple[list[str], list[list[str]]]:
    header, rows = _read_rows(path)
    return header, [row for _, row in rows]


def read_column(path, name: str) -> np.ndarray:
    header, rows = _read_rows(path)
    if name not in header:
        raise ParseError(f"no {name!r} column", 1)
    pos = header.index(name)
    return np.array([_parse_float(row[pos], line, name) for line, row in rows])


def write_decisions_csv(path, table: OutputTable, probabilities, decisions, tie_sets) -> None:
    """Input rows (minus stale derived columns) plus p_c, decision and tie."""
    keep = [i for i, h in enumerate(table.header) if not DERIVED_COLUMNS.match(h)]
    C = probabilities.shape[1]
    header = [table.header[i] for i in keep] + [f"p_{c}" for c in range(C)] + ["decision", "tie"]
    out = []
    for row, p, d, ties in zip(table.rows, probabilities, decisions, tie_sets):
        tie = "|".join(str(i) for i in ties) if len(ties) > 1 else ""
        out.append([row[i] for i in keep] + [repr(float(v)) for v in p] + [int(d), tie])
    write_table(path, header, out)


def read_decisions_csv(path):
    """Return (classes, decisions, tie_sets) from a decisions CSV."""
    header, rows = _read_rows(path)
    for name in ("class", "decision", "tie"):
        if name not in header:
            raise ParseError(f"decisions file has no {name!r} column", 1)
    cpos, dpos, tpos = (header.index(n) for n in ("class", "decision", "tie"))
    classes, decisions, ties = [], [], []
    for line, row in rows:
        classes.append(_parse_class(row[cpos], line))
        d = _parse_class(row[dpos], line)
        decisions.append(d)
        if row[tpos]:
            try:
                ties.append(tuple(int(v) for v in row[tpos].split("|")))
            except ValueError:
                raise ParseError(f"bad tie set {row[tpos]!r}", line) from None
        else:
            ties.append((d,))
    return np.array(classes, dtype=np.int64), np.array(decisions, dtype=np.int64), ties


# -- models ----------------------------------------------------------------


def model_to_dict(model: TransducerModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "n_classes": model.n_classes,
        "y_dim": model.y_dim,
        "K": model.n_components,
        "T": model.n_samples,
        "provenance": model.provenance,
        # sample-major, component-minor, then class / dimension
        "weights": model.weights.ravel().tolist(),
        "class_params": model.class_params.ravel().tolist(),
        "means": model.means.ravel().tolist(),
        "stddevs": model.stddevs.ravel().tolist(),
    }


def model_from_dict(doc: dict) -> TransducerModel:
    if doc.get("format") != MODEL_FORMAT:
        raise ParseError("not a transducer model file")
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise VersionMismatchError(
            f"model format version {version!r}, this build reads {MODEL_FORMAT_VERSION}"
        )
    try:
        T, K, C, d = (int(doc[k]) for k in ("T", "K", "n_classes", "y_dim"))
        return TransducerModel(
            np.array(doc["weights"], dtype=float).reshape(T, K),
            np.array(doc["class_params"], dtype=float).reshape(T, K, C),
            np.array(doc["means"], dtype=float).reshape(T, K, d),
            np.array(doc["stddevs"], dtype=float).reshape(T, K, d),
            provenance=doc.get("provenance") or {},
        )
    except (KeyError, ValueError) as err:
        raise ParseError(f"corrupt model file: {err}") from None


def _open(path, mode):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def save_model(model: TransducerModel, path) -> None:
    with _open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path) -> TransducerModel:
    try:
        with _open(path, "r") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as err:
        raise ParseError(f"invalid JSON: {err.msg}", err.lineno) from None
    return model_from_dict(doc)
