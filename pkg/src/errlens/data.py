"""Tabular and time-series data handling.

The core container is :class:`LabeledTable`: a columnar, immutable table of
continuous (float64) and categorical (str) feature columns plus binary labels
and unique row ids.  Time-series inputs are carried by :class:`SeriesFrame`
and turned into labeled tables via :func:`resample_series` and
:func:`featurize_rolling`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

from .errors import (
    DataError,
    DegenerateSplit,
    DuplicateRowId,
    EmptySeries,
    InvalidLabel,
    MissingColumn,
    NonNumericCell,
    SeriesTooShort,
)

FeatureKind = Literal["continuous", "categorical"]

_NAME_FORBIDDEN = set(' \t\n\r,"')


def _check_feature_name(name: str) -> None:
    if not name or any(c in _NAME_FORBIDDEN for c in name):
        raise DataError(
            f"feature name {name!r} must be non-empty and contain no "
            "whitespace, commas, or quotes"
        )


@dataclass(frozen=True, slots=True)
class FeatureSpec:
    """Name and kind of a single feature column."""

    name: str
    kind: FeatureKind

    def __post_init__(self) -> None:
        _check_feature_name(self.name)
        if self.kind not in ("continuous", "categorical"):
            raise DataError(f"unknown feature kind {self.kind!r}")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LabeledTable:
    """Immutable columnar table with binary labels and unique row ids.

    ``columns[j]`` holds feature ``schema[j]``: float64 for continuous
    features, str for categorical ones.  All columns, ``labels``, and
    ``row_ids`` have the same length.
    """

    schema: tuple[FeatureSpec, ...]
    columns: tuple[np.ndarray, ...]
    labels: np.ndarray
    row_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.schema:
            raise DataError("a table needs at least one feature")
        names = [f.name for f in self.schema]
        if len(set(names)) != len(names):
            raise DataError("feature names must be unique")
        if len(self.columns) != len(self.schema):
            raise DataError("one column per schema entry required")
        n = len(self.row_ids)
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (n,):
            raise DataError("labels must align with rows")
        if not np.isin(labels, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        cols = []
        for spec, col in zip(self.schema, self.columns):
            if spec.kind == "continuous":
                col = np.asarray(col, dtype=np.float64)
                if col.shape != (n,):
                    raise DataError(f"column {spec.name!r} must align with rows")
                if not np.isfinite(col).all():
                    raise DataError(f"column {spec.name!r} contains non-finite values")
            else:
                col = np.asarray(col, dtype=str)
                if col.shape != (n,):
                    raise DataError(f"column {spec.name!r} must align with rows")
            cols.append(_frozen(col))
        if len(set(self.row_ids)) != n:
            raise DuplicateRowId("row ids must be unique")
        object.__setattr__(self, "columns", tuple(cols))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "row_ids", tuple(str(r) for r in self.row_ids))

    @property
    def n_rows(self) -> int:
        return len(self.row_ids)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.schema)

    def index_of(self, feature: str) -> int:
        try:
            return self.feature_names.index(feature)
        except ValueError:
            raise KeyError(feature) from None

    def column(self, feature: str) -> np.ndarray:
        return self.columns[self.index_of(feature)]

    def row_values(self, i: int) -> tuple[float | str, ...]:
        """Feature values of row ``i``, in schema order."""
        return tuple(col[i] for col in self.columns)

    def subset(self, indices: Sequence[int] | np.ndarray) -> "LabeledTable":
        idx = np.asarray(indices, dtype=np.intp)
        return LabeledTable(
            schema=self.schema,
            columns=tuple(col[idx] for col in self.columns),
            labels=self.labels[idx],
            row_ids=tuple(self.row_ids[i] for i in idx),
        )


def concat_tables(tables: Sequence[LabeledTable]) -> LabeledTable:
    """Stack tables with identical schemas; row ids must stay unique."""
    if not tables:
        raise DataError("nothing to concatenate")
    schema = tables[0].schema
    for t in tables[1:]:
        if t.schema != schema:
            raise DataError("all tables must share one schema")
    return LabeledTable(
        schema=schema,
        columns=tuple(
            np.concatenate([t.columns[j] for t in tables]) for j in range(len(schema))
        ),
        labels=np.concatenate([t.labels for t in tables]),
        row_ids=tuple(r for t in tables for r in t.row_ids),
    )


# --- CSV loading -------------------------------------------------------------


def load_csv(
    path: str,
    schema: Sequence[FeatureSpec],
    label_column: str = "label",
    id_column: str | None = None,
) -> LabeledTable:
    """Read a labeled table from a CSV file with a header row.

    Continuous cells must parse as finite numbers, labels must be 0 or 1.
    Without ``id_column``, row ids are the 0-based data-row indices.
    """
    schema = tuple(schema)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn("empty file: header row required") from None
        pos = {name: i for i, name in enumerate(header)}
        needed = [f.name for f in schema] + [label_column]
        if id_column is not None:
            needed.append(id_column)
        for name in needed:
            if name not in pos:
                raise MissingColumn(name)

        raw_cols: list[list] = [[] for _ in schema]
        labels: list[int] = []
        ids: list[str] = []
        for row_idx, row in enumerate(reader):
            if len(row) != len(header):
                raise DataError(f"row {row_idx}: expected {len(header)} cells")
            for j, spec in enumerate(schema):
                cell = row[pos[spec.name]]
                if spec.kind == "continuous":
                    try:
                        value = float(cell)
                    except ValueError:
                        raise NonNumericCell(
                            f"row {row_idx}, column {spec.name!r}: {cell!r}"
                        ) from None
                    if not math.isfinite(value):
                        raise NonNumericCell(
                            f"row {row_idx}, column {spec.name!r}: {cell!r}"
                        )
                    raw_cols[j].append(value)
                else:
                    raw_cols[j].append(cell)
            label_cell = row[pos[label_column]].strip()
            if label_cell not in ("0", "1"):
                raise InvalidLabel(f"row {row_idx}: {label_cell!r}")
            labels.append(int(label_cell))
            ids.append(row[pos[id_column]] if id_column is not None else str(row_idx))

    return LabeledTable(
        schema=schema,
        columns=tuple(
            np.asarray(c, dtype=np.float64 if s.kind == "continuous" else str)
            for s, c in zip(schema, raw_cols)
        ),
        labels=np.asarray(labels, dtype=np.int64),
        row_ids=tuple(ids),
    )


def write_csv(table: LabeledTable, path: str, include_row_id: bool = False) -> None:
    """Write a table as CSV (features in schema order, then the label).

    Continuous cells use shortest round-trip formatting, so a write/load
    cycle reproduces the table exactly.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["row_id"] if include_row_id else []
        header += [f.name for f in table.schema] + ["label"]
        writer.writerow(header)
        for i in range(table.n_rows):
            row: list[str] = [table.row_ids[i]] if include_row_id else []
            for spec, col in zip(table.schema, table.columns):
                row.append(repr(float(col[i])) if spec.kind == "continuous"
                           else str(col[i]))
            row.append(str(int(table.labels[i])))
            writer.writerow(row)


# --- time series -------------------------------------------------------------


@dataclass(frozen=True)
class SeriesFrame:
    """One entity's multichannel time series with a single binary label.

    ``static`` carries per-entity categorical attributes that are replicated
    onto every featurized row (e.g. demographic fields).
    """

    entity_id: str
    timestamps: np.ndarray  # int64 seconds, strictly increasing
    channels: dict[str, np.ndarray]  # name -> float64, aligned with timestamps
    label: int
    static: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps, dtype=np.int64)
        if ts.ndim != 1:
            raise DataError("timestamps must be one-dimensional")
        if ts.size > 1 and not (np.diff(ts) > 0).all():
            raise DataError("timestamps must be strictly increasing")
        chans = {}
        for name, values in self.channels.items():
            _check_feature_name(name)
            arr = np.asarray(values, dtype=np.float64)
            if arr.shape != ts.shape:
                raise DataError(f"channel {name!r} must align with timestamps")
            if not np.isfinite(arr).all():
                raise DataError(f"channel {name!r} contains non-finite values")
            chans[name] = _frozen(arr)
        if not chans:
            raise DataError("a series needs at least one channel")
        if self.label not in (0, 1):
            raise InvalidLabel(f"series {self.entity_id!r}: label {self.label!r}")
        object.__setattr__(self, "timestamps", _frozen(ts))
        object.__setattr__(self, "channels", chans)

    @property
    def n_samples(self) -> int:
        return int(self.timestamps.size)


def resample_series(series: SeriesFrame, interval_s: int = 300) -> SeriesFrame:
    """Aggregate a series onto a regular grid of ``interval_s``-second bins.

    Each output sample sits at a bin start ``k * interval_s`` and holds the
    arithmetic mean of the raw samples falling in ``[k*i, (k+1)*i)``; bins
    without samples are forward-filled from the previous bin.  The grid starts
    at the bin containing the first raw sample, so there is nothing to fill
    before the first observation.
    """
    if interval_s <= 0:
        raise DataError("interval_s must be positive")
    if series.n_samples == 0:
        raise EmptySeries(series.entity_id)
    ts = series.timestamps
    k0 = int(ts[0] // interval_s)
    k1 = int(ts[-1] // interval_s)
    n_bins = k1 - k0 + 1
    bin_idx = (ts // interval_s - k0).astype(np.intp)
    counts = np.bincount(bin_idx, minlength=n_bins)
    # Index of the latest non-empty bin at or before each position: the
    # forward-fill source (bin 0 is non-empty by construction).
    fill_src = np.maximum.accumulate(
        np.where(counts > 0, np.arange(n_bins), 0)
    )
    channels = {}
    for name, values in series.channels.items():
        sums = np.bincount(bin_idx, weights=values, minlength=n_bins)
        means = np.divide(sums, counts, out=np.zeros(n_bins), where=counts > 0)
        channels[name] = means[fill_src]
    return SeriesFrame(
        entity_id=series.entity_id,
        timestamps=(np.arange(k0, k1 + 1, dtype=np.int64) * interval_s),
        channels=channels,
        label=series.label,
        static=dict(series.static),
    )


def featurize_rolling(
    series: SeriesFrame,
    windows: Sequence[int] = (3, 6),
    lags: Sequence[int] = (1, 2),
) -> LabeledTable:
    """Expand a uniformly spaced series into per-time-step feature rows.

    Per channel the features are: the current value, trailing means and
    population standard deviations over each window (window includes the
    current step), and lagged values.  Only steps with full history for the
    largest window and lag produce a row; the series label is replicated to
    every row, as are the entity's static categorical attributes.  Row ids
    are ``"<entity_id>:<timestamp>"``.
    """
    windows = tuple(int(w) for w in windows)
    lags = tuple(int(a) for a in lags)
    if any(w <= 0 for w in windows) or any(a <= 0 for a in lags):
        raise DataError("windows and lags must be positive")
    ts = series.timestamps
    if ts.size > 1 and np.unique(np.diff(ts)).size != 1:
        raise DataError("series must be uniformly spaced; resample it first")
    first = max(max(windows, default=1) - 1, max(lags, default=0))
    n_out = series.n_samples - first
    if n_out <= 0:
        raise SeriesTooShort(
            f"{series.entity_id!r}: {series.n_samples} samples, "
            f"need more than {first}"
        )

    names = list(series.channels)
    schema: list[FeatureSpec] = [FeatureSpec(c, "continuous") for c in names]
    columns: list[np.ndarray] = [series.channels[c][first:] for c in names]
    for c in names:
        values = series.channels[c]
        for w in windows:
            view = np.lib.stride_tricks.sliding_window_view(values, w)
            schema.append(FeatureSpec(f"{c}_mean_{w}", "continuous"))
            columns.append(view.mean(axis=1)[first - (w - 1):][:n_out])
        for w in windows:
            view = np.lib.stride_tricks.sliding_window_view(values, w)
            schema.append(FeatureSpec(f"{c}_std_{w}", "continuous"))
            columns.append(view.std(axis=1)[first - (w - 1):][:n_out])
        for a in lags:
            schema.append(FeatureSpec(f"{c}_lag_{a}", "continuous"))
            columns.append(values[first - a: series.n_samples - a])
    for key in series.static:
        schema.append(FeatureSpec(key, "categorical"))
        columns.append(np.full(n_out, series.static[key]))

    return LabeledTable(
        schema=tuple(schema),
        columns=tuple(columns),
        labels=np.full(n_out, series.label, dtype=np.int64),
        row_ids=tuple(f"{series.entity_id}:{t}" for t in ts[first:]),
    )


def load_series_csv(
    path: str,
    channel_columns: Sequence[str],
    entity_column: str = "entity_id",
    time_column: str = "timestamp_s",
    label_column: str = "label",
    static_columns: Sequence[str] = (),
) -> list[SeriesFrame]:
    """Read long-format time-series CSV into one :class:`SeriesFrame` per entity.

    Expected columns: entity id, integer timestamp in seconds, one column per
    channel, a per-entity label, and optional per-entity static categorical
    columns.  Rows may appear in any order; they are sorted by timestamp
    within each entity.  Entities appear in the output in first-seen order.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise MissingColumn("empty file: header row required")
        for name in (entity_column, time_column, label_column, *channel_columns,
                     *static_columns):
            if name not in reader.fieldnames:
                raise MissingColumn(name)
        grouped: dict[str, dict] = {}
        for row_idx, row in enumerate(reader):
            ent = row[entity_column]
            rec = grouped.setdefault(
                ent, {"t": [], "ch": {c: [] for c in channel_columns},
                      "label": None, "static": None}
            )
            try:
                rec["t"].append(int(row[time_column]))
            except ValueError:
                raise NonNumericCell(
                    f"row {row_idx}, column {time_column!r}: {row[time_column]!r}"
                ) from None
            for c in channel_columns:
                try:
                    value = float(row[c])
                except ValueError:
                    raise NonNumericCell(
                        f"row {row_idx}, column {c!r}: {row[c]!r}"
                    ) from None
                rec["ch"][c].append(value)
            if row[label_column].strip() not in ("0", "1"):
                raise InvalidLabel(f"row {row_idx}: {row[label_column]!r}")
            label = int(row[label_column])
            if rec["label"] not in (None, label):
                raise InvalidLabel(f"entity {ent!r} has conflicting labels")
            rec["label"] = label
            static = {c: row[c] for c in static_columns}
            if rec["static"] not in (None, static):
                raise DataError(f"entity {ent!r} has conflicting static attributes")
            rec["static"] = static

    frames = []
    for ent, rec in grouped.items():
        order = np.argsort(np.asarray(rec["t"]), kind="stable")
        frames.append(
            SeriesFrame(
                entity_id=ent,
                timestamps=np.asarray(rec["t"], dtype=np.int64)[order],
                channels={c: np.asarray(v, dtype=np.float64)[order]
                          for c, v in rec["ch"].items()},
                label=rec["label"],
                static=rec["static"],
            )
        )
    return frames


# --- train/test split --------------------------------------------------------


def split(
    table: LabeledTable, test_fraction: float, seed: int
) -> tuple[LabeledTable, LabeledTable]:
    """Deterministic seeded shuffle split; train gets ceil(n*(1-f)) rows."""
    if not 0.0 < test_fraction < 1.0:
        raise DegenerateSplit(f"test_fraction {test_fraction!r} not in (0, 1)")
    n = table.n_rows
    # ceil(n*(1-f)) == n - floor(n*f); nudge so e.g. n=10, f=0.3 puts
    # exactly 3 rows in the test side despite 10*0.3 != 3.0 in binary.
    n_train = n - int(math.floor(n * test_fraction + 1e-9))
    if n_train <= 0 or n_train >= n:
        raise DegenerateSplit(f"split of {n} rows leaves an empty side")
    perm = np.random.default_rng(seed).permutation(n)
    return table.subset(perm[:n_train]), table.subset(perm[n_train:])
