"""Readers for the benchmark's CSV outputs.

Two layouts are understood: the per-tick trace (one row per control tick,
``solver_status`` the only non-numeric column) and the long-format metrics
summary with header ``metric,index,channel,value``.  Anything that does not
match raises SchemaError naming exactly which columns were missing and
which were found, so a figure never renders from the wrong file.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass

import numpy as np


class SchemaError(ValueError):
    """Input file does not match the documented column layout."""


def _missing(missing, found) -> SchemaError:
    return SchemaError(
        f"missing column(s) {sorted(missing)}; file has: {', '.join(found)}"
    )


@dataclass(frozen=True)
class TraceTable:
    """Numeric trace columns by name, plus the solver status strings."""

    header: tuple[str, ...]
    columns: dict[str, np.ndarray]
    statuses: tuple[str, ...]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise _missing({name}, self.header) from None

    def require(self, names) -> None:
        missing = [n for n in names if n not in self.columns]
        if missing:
            raise _missing(missing, self.header)

    def cp_indices(self, suffix: str) -> tuple[int, ...]:
        """Control-point indices that carry a ``cp{i}_{suffix}`` column."""
        pattern = re.compile(rf"cp(\d+)_{re.escape(suffix)}")
        found = []
        for name in self.header:
            match = pattern.fullmatch(name)
            if match:
                found.append(int(match.group(1)))
        return tuple(sorted(found))


def read_trace(path) -> TraceTable:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file, expected a trace header") from None
        rows = list(reader)
    required = {"t", "solver_status"}
    if not required <= set(header):
        raise _missing(required - set(header), header)
    status_idx = header.index("solver_status")

    statuses = []
    numeric = []
    for k, row in enumerate(rows):
        if len(row) != len(header):
            raise SchemaError(
                f"row {k + 1}: expected {len(header)} fields, got {len(row)}"
            )
        try:
            numeric.append(
                [float(v) for i, v in enumerate(row) if i != status_idx]
            )
        except ValueError:
            raise SchemaError(f"row {k + 1}: non-numeric field") from None
        statuses.append(row[status_idx])

    data = np.array(numeric) if numeric else np.zeros((0, len(header) - 1))
    columns = {}
    offset = 0
    for idx, name in enumerate(header):
        if idx == status_idx:
            offset = 1
            continue
        columns[name] = data[:, idx - offset]
    return TraceTable(
        header=tuple(header), columns=columns, statuses=tuple(statuses)
    )


METRICS_HEADER = ("metric", "index", "channel", "value")


@dataclass(frozen=True)
class MetricsTable:
    """Long-format summary rows: (metric, index, channel, value)."""

    rows: tuple[tuple[str, str, str, float], ...]

    def select(self, metric: str):
        """Indices, channels (first-appearance order) and a value grid.

        Returns (indices, channels, values) where values[i, c] is the entry
        for indices[i] and channels[c]; missing combinations are NaN.
        """
        picked = [row for row in self.rows if row[0] == metric]
        if not picked:
            known = sorted({row[0] for row in self.rows})
            raise SchemaError(
                f"no rows for metric {metric!r}; file has metrics: {known}"
            )
        indices = []
        channels = []
        for _, index, channel, _ in picked:
            if index not in indices:
                indices.append(index)
            if channel not in channels:
                channels.append(channel)
        values = np.full((len(indices), len(channels)), np.nan)
        for _, index, channel, value in picked:
            values[indices.index(index), channels.index(channel)] = value
        return indices, channels, values


def read_metrics(path) -> MetricsTable:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file, expected a metrics header") from None
        if tuple(header) != METRICS_HEADER:
            raise _missing(set(METRICS_HEADER) - set(header), header)
        rows = []
        for k, row in enumerate(reader):
            if len(row) != 4:
                raise SchemaError(f"row {k + 1}: expected 4 fields")
            try:
                rows.append((row[0], row[1], row[2], float(row[3])))
            except ValueError:
                raise SchemaError(
                    f"row {k + 1}: non-numeric value field"
                ) from None
    return MetricsTable(rows=tuple(rows))
