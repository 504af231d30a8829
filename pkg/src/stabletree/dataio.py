"""File formats: schema JSON and CSV datasets (see docs/formats.md)."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .core import Dataset, Schema
from .errors import DataError, SchemaError


def load_schema(path: str | Path) -> Schema:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read schema file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(
            f"schema file {path} is not valid JSON "
            f"(line {exc.lineno}, column {exc.colno})"
        ) from exc
    return Schema.from_dict(payload)


def save_schema(schema: Schema, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema.to_dict(), fh, indent=1)
        fh.write("\n")


def load_dataset(schema: Schema, path: str | Path, require_labels: bool = False) -> Dataset:
    """Read a header-ed CSV against a schema.

    Covariate columns are matched by name. When the schema names a label
    column, its cells must equal one of the schema's class names.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path} is empty") from None
            records = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read data file {path}: {exc}") from exc

    header = [h.strip() for h in header]
    col_pos = {}
    for col in schema.columns:
        if col.name not in header:
            raise DataError(f"{path} is missing covariate column {col.name!r}")
        col_pos[col.name] = header.index(col.name)

    label_pos = None
    if schema.label_column is not None:
        if schema.label_column in header:
            label_pos = header.index(schema.label_column)
        elif require_labels:
            raise DataError(f"{path} is missing label column {schema.label_column!r}")
    elif require_labels:
        raise DataError("schema declares no label column but labels are required")

    n = len(records)
    rows = np.empty((n, schema.column_count))
    labels = np.empty(n, dtype=np.int64) if label_pos is not None else None
    class_index = {name: i for i, name in enumerate(schema.class_names)}
    for i, record in enumerate(records):
        if len(record) != len(header):
            raise DataError(f"{path} line {i + 2}: expected {len(header)} cells")
        for j, col in enumerate(schema.columns):
            cell = record[col_pos[col.name]].strip()
            try:
                rows[i, j] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path} line {i + 2}, column {col.name!r}: "
                    f"cannot parse {cell!r} as a number"
                ) from None
        if labels is not None:
            cell = record[label_pos].strip()
            if cell not in class_index:
                raise DataError(
                    f"{path} line {i + 2}: label {cell!r} is not one of "
                    f"{list(schema.class_names)}"
                )
            labels[i] = class_index[cell]

    try:
        return Dataset(schema, rows, labels)
    except SchemaError as exc:
        raise DataError(f"{path} does not conform to the schema: {exc}") from exc


def save_dataset(data: Dataset, path: str | Path) -> None:
    schema = data.schema
    header = [c.name for c in schema.columns]
    if data.labels is not None:
        if schema.label_column is None:
            raise DataError("schema declares no label column; cannot write labels")
        header.append(schema.label_column)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n_rows):
            record = [_format_cell(v, col.is_ordinal)
                      for v, col in zip(data.rows[i], schema.columns)]
            if data.labels is not None:
                record.append(schema.class_names[data.labels[i]])
            writer.writerow(record)


def _format_cell(value: float, is_ordinal: bool) -> str:
    return str(int(value)) if is_ordinal else repr(float(value))
