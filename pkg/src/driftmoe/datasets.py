"""Load ARFF / CSV datasets into the stream abstraction.

Row order is the stream order; no shuffling.  Nominal attributes are either
index-encoded (one real per attribute, preserving the file's feature count)
or one-hot expanded.  Labels are mapped to contiguous [0, C): declaration
order for ARFF nominals, sorted value order for CSV.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .streams import ArrayStream, FeatureKind, StreamSchema


class DatasetError(Exception):
    """Malformed dataset file or manifest."""


@dataclass
class DatasetManifest:
    path: Union[str, Path]
    format: Optional[str] = None  # "arff" | "csv"; inferred from suffix when None
    label_column: Union[int, str] = -1
    nominal_encoding: str = "index"  # "index" | "one_hot"

    def resolved_format(self) -> str:
        if self.format is not None:
            fmt = self.format.lower()
        else:
            fmt = Path(self.path).suffix.lstrip(".").lower()
        if fmt not in ("arff", "csv"):
            raise DatasetError(f"unsupported dataset format {fmt!r}")
        return fmt


@dataclass
class _Column:
    name: str
    nominal_values: Optional[list[str]]  # None for numeric columns

    @property
    def is_nominal(self) -> bool:
        return self.nominal_values is not None


_ARFF_ATTR = re.compile(r"@attribute\s+('([^']*)'|\"([^\"]*)\"|(\S+))\s+(.+)", re.IGNORECASE)


def _parse_arff(path: Path) -> tuple[list[_Column], list[list[str]]]:
    columns: list[_Column] = []
    rows: list[list[str]] = []
    in_data = False
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("%"):
                continue
            if not in_data:
                low = line.lower()
                if low.startswith("@relation"):
                    continue
                if low.startswith("@attribute"):
                    m = _ARFF_ATTR.match(line)
                    if not m:
                        raise DatasetError(f"{path}:{lineno}: malformed @attribute line")
                    name = m.group(2) or m.group(3) or m.group(4)
                    spec = m.group(5).strip()
                    if spec.startswith("{"):
                        if not spec.endswith("}"):
                            raise DatasetError(
                                f"{path}:{lineno}: unterminated nominal specification"
                            )
                        values = [v.strip().strip("'\"") for v in spec[1:-1].split(",")]
                        columns.append(_Column(name, values))
                    elif spec.lower().split()[0] in ("numeric", "real", "integer"):
                        columns.append(_Column(name, None))
                    else:
                        raise DatasetError(
                            f"{path}:{lineno}: unsupported attribute type {spec!r}"
                        )
                    continue
                if low.startswith("@data"):
                    in_data = True
                    continue
                raise DatasetError(f"{path}:{lineno}: unexpected header line {line!r}")
            else:
                values = next(csv.reader([line]))
                values = [v.strip().strip("'\"") for v in values]
                if len(values) != len(columns):
                    raise DatasetError(
                        f"{path}:{lineno}: row has {len(values)} values, "
                        f"expected {len(columns)}"
                    )
                rows.append(values)
    if not in_data:
        raise DatasetError(f"{path}: no @data section")
    if not columns:
        raise DatasetError(f"{path}: no @attribute declarations")
    return columns, rows


def _parse_csv(path: Path) -> tuple[list[_Column], list[list[str]]]:
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        rows = []
        for lineno, values in enumerate(reader, start=2):
            if not values:
                continue
            if len(values) != len(header):
                raise DatasetError(
                    f"{path}:{lineno}: row has {len(values)} values, expected {len(header)}"
                )
            rows.append([v.strip() for v in values])
    # a column is numeric when every value parses as a float
    columns = []
    for j, name in enumerate(header):
        nominal = False
        for row in rows:
            try:
                float(row[j])
            except ValueError:
                nominal = True
                break
        if nominal:
            values = sorted({row[j] for row in rows})
            columns.append(_Column(name, values))
        else:
            columns.append(_Column(name, None))
    return columns, rows


def _resolve_label(columns: list[_Column], label_column: Union[int, str]) -> int:
    if isinstance(label_column, str):
        names = [c.name for c in columns]
        if label_column not in names:
            raise DatasetError(f"label column {label_column!r} not in {names}")
        return names.index(label_column)
    idx = label_column if label_column >= 0 else len(columns) + label_column
    if not 0 <= idx < len(columns):
        raise DatasetError(f"label column index {label_column} out of range")
    return idx


def load_dataset(manifest: DatasetManifest) -> ArrayStream:
    """Load the manifest's file as an in-memory stream in file order."""
    path = Path(manifest.path)
    if not path.exists():
        raise DatasetError(f"no such file: {path}")
    fmt = manifest.resolved_format()
    columns, rows = _parse_arff(path) if fmt == "arff" else _parse_csv(path)
    label_idx = _resolve_label(columns, manifest.label_column)
    label_col = columns[label_idx]

    if label_col.is_nominal:
        class_names = list(label_col.nominal_values)
    else:
        seen = []
        for row in rows:
            if row[label_idx] not in seen:
                seen.append(row[label_idx])
        class_names = sorted(seen, key=float)
    class_index = {v: i for i, v in enumerate(class_names)}
    if len(class_names) < 2:
        raise DatasetError("label column has fewer than 2 distinct values")

    one_hot = manifest.nominal_encoding == "one_hot"
    if manifest.nominal_encoding not in ("index", "one_hot"):
        raise DatasetError(f"unknown nominal encoding {manifest.nominal_encoding!r}")

    feature_cols = [(j, c) for j, c in enumerate(columns) if j != label_idx]
    kinds: list[FeatureKind] = []
    for _, c in feature_cols:
        if not c.is_nominal:
            kinds.append(FeatureKind.NUMERIC)
        elif one_hot:
            kinds.extend([FeatureKind.BINARY] * len(c.nominal_values))
        elif len(c.nominal_values) == 2:
            kinds.append(FeatureKind.BINARY)
        else:
            kinds.append(FeatureKind.NUMERIC)

    nominal_index = {
        j: {v: i for i, v in enumerate(c.nominal_values)}
        for j, c in feature_cols
        if c.is_nominal
    }

    n, d = len(rows), len(kinds)
    X = np.zeros((n, d))
    y = np.zeros(n, dtype=np.int64)
    for r, row in enumerate(rows):
        lab = row[label_idx]
        if lab not in class_index:
            raise DatasetError(f"{path}: row {r + 1}: unseen label value {lab!r}")
        y[r] = class_index[lab]
        out = 0
        for j, c in feature_cols:
            v = row[j]
            if not c.is_nominal:
                try:
                    X[r, out] = float(v)
                except ValueError:
                    raise DatasetError(
                        f"{path}: row {r + 1}: non-numeric value {v!r} in numeric "
                        f"column {c.name!r}"
                    ) from None
                out += 1
            else:
                if v not in nominal_index[j]:
                    raise DatasetError(
                        f"{path}: row {r + 1}: unseen nominal value {v!r} in "
                        f"column {c.name!r}"
                    )
                code = nominal_index[j][v]
                if one_hot:
                    X[r, out + code] = 1.0
                    out += len(c.nominal_values)
                else:
                    X[r, out] = float(code)
                    out += 1

    schema = StreamSchema(d, tuple(kinds), len(class_names), tuple(class_names))
    return ArrayStream(X, y, schema)
