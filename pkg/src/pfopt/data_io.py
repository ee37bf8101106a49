"""Dataset parsers and trace persistence.

Supports the sparse `label index:value` classification format (1-based,
strictly increasing indices per line) and tab-separated ratings
quadruples. Traces round-trip through a CSV plus a JSON metadata sidecar
with 17-significant-digit floats, so reloaded values match bit for bit.
"""

from __future__ import annotations

import io
import json
import os
from dataclasses import dataclass, field
from typing import Optional, TextIO, Union

import numpy as np

from .core import SparseMatrix
from .solvers import SolverTrace

BASE_COLUMNS = ("k", "f_value", "fw_gap", "step_delta", "wall_time_ns")
# Diagnostics columns keep this order in the CSV header; any further
# extras follow alphabetically.
NAMED_EXTRAS = ("phi_star", "xi", "lambda")


class MalformedLine(Exception):
    def __init__(self, line_no: int, text: str, why: str):
        super().__init__(f"line {line_no}: {why}: {text!r}")
        self.line_no = line_no
        self.text = text


class NonBinaryLabels(Exception):
    """More than two distinct label values, or an unmappable pair."""


class SchemaMismatch(Exception):
    """A trace file does not carry the expected columns."""


@dataclass(frozen=True)
class LabeledDataset:
    features: SparseMatrix
    labels: np.ndarray
    source_path: str = ""
    label_mapping: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RatingsDataset:
    ratings: SparseMatrix
    n_users: int
    n_items: int
    duplicates_dropped: int = 0


def _open_text(path_or_stream) -> TextIO:
    if hasattr(path_or_stream, "read"):
        return path_or_stream
    return open(path_or_stream, "r", encoding="utf-8")


def _normalize_labels(raw: np.ndarray):
    """Map raw binary labels onto {-1, +1}; smaller value becomes -1."""
    values = sorted(set(raw.tolist()))
    if len(values) > 2:
        raise NonBinaryLabels(f"found {len(values)} distinct labels: {values[:5]}")
    known = [{-1.0, 1.0}, {0.0, 1.0}, {1.0, 2.0}]
    ok = any(set(values).issubset(s) for s in known)
    if not ok:
        raise NonBinaryLabels(f"cannot map labels {values} onto -1/+1")
    if set(values).issubset({-1.0, 1.0}):
        mapping = {v: v for v in values}
    elif set(values).issubset({0.0, 1.0}):
        mapping = {0.0: -1.0, 1.0: 1.0}
    else:
        mapping = {1.0: -1.0, 2.0: 1.0}
    mapped = np.array([mapping[v] for v in raw], dtype=np.float64)
    return mapped, {str(k): v for k, v in mapping.items()}


def parse_libsvm(path_or_stream, n_features: Optional[int] = None,
                 source_path: str = "") -> LabeledDataset:
    """Parse sparse `label idx:val ...` classification data.

    Indices are 1-based and strictly increasing within a line; they come
    back 0-based. Labels from {-1,+1}, {0,1} or {1,2} are normalized to
    -1/+1 (mapping recorded on the dataset). The feature dimension is the
    maximum index seen unless `n_features` overrides it, which matters
    when trailing all-zero features were dropped by the producer.
    """
    stream = _open_text(path_or_stream)
    close = stream is not path_or_stream
    raw_labels = []
    rows, cols, vals = [], [], []
    max_index = 0
    try:
        for line_no, line in enumerate(stream, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            try:
                raw_labels.append(float(parts[0]))
            except ValueError:
                raise MalformedLine(line_no, line, "unreadable label") from None
            prev = 0
            for token in parts[1:]:
                try:
                    idx_s, val_s = token.split(":", 1)
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise MalformedLine(line_no, line,
                                        f"bad feature token {token!r}") from None
                if idx <= prev:
                    raise MalformedLine(line_no, line,
                                        "indices must be 1-based and strictly increasing")
                prev = idx
                rows.append(len(raw_labels) - 1)
                cols.append(idx - 1)
                vals.append(val)
                max_index = max(max_index, idx)
    finally:
        if close:
            stream.close()
    if not raw_labels:
        raise MalformedLine(0, "", "no records found")
    labels, mapping = _normalize_labels(np.asarray(raw_labels))
    dim = n_features if n_features is not None else max(max_index, 1)
    if max_index > dim:
        raise ValueError(f"feature index {max_index} exceeds override {dim}")
    features = SparseMatrix(len(raw_labels), dim, rows, cols, vals)
    if not source_path and isinstance(path_or_stream, (str, os.PathLike)):
        source_path = str(path_or_stream)
    return LabeledDataset(features, labels, source_path, mapping)


def parse_movielens(path_or_stream) -> RatingsDataset:
    """Parse tab-separated `user item rating timestamp` quadruples.

    Ids are 1-based and become 0-based coordinates. A repeated
    (user, item) pair keeps the last occurrence; the drop count is
    reported on the dataset.
    """
    stream = _open_text(path_or_stream)
    close = stream is not path_or_stream
    entries = {}
    duplicates = 0
    try:
        for line_no, line in enumerate(stream, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise MalformedLine(line_no, line, "expected 4 tab-separated fields")
            try:
                user = int(parts[0])
                item = int(parts[1])
                rating = float(parts[2])
                int(parts[3])  # timestamp, validated but unused
            except ValueError:
                raise MalformedLine(line_no, line, "unreadable fields") from None
            if user < 1 or item < 1:
                raise MalformedLine(line_no, line, "ids must be 1-based")
            key = (user - 1, item - 1)
            if key in entries:
                duplicates += 1
            entries[key] = rating
    finally:
        if close:
            stream.close()
    if not entries:
        raise MalformedLine(0, "", "no ratings found")
    keys = np.array(sorted(entries), dtype=np.int64)
    vals = np.array([entries[tuple(k)] for k in keys], dtype=np.float64)
    n_users = int(keys[:, 0].max()) + 1
    n_items = int(keys[:, 1].max()) + 1
    ratings = SparseMatrix(n_users, n_items, keys[:, 0], keys[:, 1], vals)
    return RatingsDataset(ratings, n_users, n_items, duplicates)


def _trace_columns(trace: SolverTrace):
    extras = [n for n in NAMED_EXTRAS if n in trace.extras]
    extras += sorted(n for n in trace.extras if n not in NAMED_EXTRAS)
    return extras


def _fmt(x: float) -> str:
    return format(x, ".17g")


def write_trace(trace: SolverTrace, path: Union[str, os.PathLike]) -> None:
    """Write a trace CSV and its JSON metadata sidecar (`<path>.meta.json`)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(write_trace_string(trace))
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(trace.metadata, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sidecar_path(path):
    return str(path) + ".meta.json"


def read_trace(path: Union[str, os.PathLike]) -> SolverTrace:
    """Load a trace written by `write_trace`."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        names = header.split(",")
        if tuple(names[:5]) != BASE_COLUMNS:
            raise SchemaMismatch(f"unexpected header {header!r}")
        columns = [[] for _ in names]
        for line_no, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != len(names):
                raise SchemaMismatch(f"row {line_no} has {len(cells)} cells, "
                                     f"expected {len(names)}")
            for col, cell in zip(columns, cells):
                col.append(cell)
    metadata = {}
    sidecar = _sidecar_path(path)
    if os.path.exists(sidecar):
        with open(sidecar, "r", encoding="utf-8") as fh:
            metadata = json.load(fh)
    extras = {name: np.array([float(c) for c in col])
              for name, col in zip(names[5:], columns[5:])}
    return SolverTrace(
        k=np.array([int(c) for c in columns[0]], dtype=np.int64),
        f_value=np.array([float(c) for c in columns[1]]),
        fw_gap=np.array([float(c) for c in columns[2]]),
        step_delta=np.array([float(c) for c in columns[3]]),
        wall_time_ns=np.array([int(c) for c in columns[4]], dtype=np.int64),
        extras=extras,
        metadata=metadata)


def write_trace_string(trace: SolverTrace) -> str:
    """CSV content as a string (used for byte-identity checks)."""
    buf = io.StringIO()
    extras = _trace_columns(trace)
    buf.write(",".join(BASE_COLUMNS + tuple(extras)) + "\n")
    for i in range(trace.k.size):
        cells = [str(int(trace.k[i])), _fmt(trace.f_value[i]),
                 _fmt(trace.fw_gap[i]), _fmt(trace.step_delta[i]),
                 str(int(trace.wall_time_ns[i]))]
        cells += [_fmt(trace.extras[name][i]) for name in extras]
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()
