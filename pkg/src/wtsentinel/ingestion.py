"""Load SCADA CSV exports, put them on the sampling grid, split training/monitoring."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .domain import FarmConfig, SampleMatrix, format_timestamp, snap_to_grid
from .errors import DataError, InsufficientTrainingDataError

log = logging.getLogger(__name__)

MANDATORY_COLUMNS = ("timestamp", "turbine_id")


@dataclass(frozen=True)
class RawRecordTable:
    """Unsorted SCADA rows: ``timestamp`` (UTC), ``turbine_id`` and one float column per tag.

    Missing values are NaN. Row order is file order, which breaks ties
    between duplicate timestamps. ``absent_tags`` lists requested tags that
    had no column in the source file(s).
    """

    frame: pd.DataFrame
    tag_names: tuple[str, ...]
    unknown_columns: tuple[str, ...] = ()
    absent_tags: tuple[str, ...] = ()

    def __len__(self):
        return len(self.frame)

    @classmethod
    def concat(cls, tables):
        tables = list(tables)
        if not tables:
            raise DataError("no SCADA tables to combine")
        names = tables[0].tag_names
        frame = pd.concat([t.frame for t in tables], ignore_index=True)
        unknown = tuple(sorted({c for t in tables for c in t.unknown_columns}))
        absent = tuple(n for n in names if all(n in t.absent_tags for t in tables))
        return cls(frame, names, unknown, absent)

    def to_csv(self, path) -> None:
        out = self.frame.copy()
        out["timestamp"] = [format_timestamp(t) for t in out["timestamp"]]
        _atomic_write_csv(out[["timestamp", "turbine_id", *self.tag_names]], path)


@dataclass(frozen=True)
class GapPolicy:
    max_interpolation_gap: int = 3

    def __post_init__(self):
        if self.max_interpolation_gap < 0:
            raise ValueError("max_interpolation_gap must be >= 0")


def _atomic_write_csv(frame: pd.DataFrame, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    frame.to_csv(tmp, index=False, float_format="%.17g", lineterminator="\n")
    tmp.replace(path)


def load_scada_csv(path, schema: FarmConfig) -> RawRecordTable:
    """Parse one SCADA CSV against the farm's tag dictionary."""
    return read_scada_csv(path, schema.tag_names)


def read_scada_csv(path, tag_names) -> RawRecordTable:
    """Parse one SCADA CSV keeping ``tag_names``; absent tags become all-missing columns."""
    tag_names = tuple(tag_names)
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read SCADA file {path}: {exc}") from None
    except pd.errors.EmptyDataError:
        raise DataError(f"SCADA file {path} is empty") from None
    frame.columns = [c.strip() for c in frame.columns]
    missing = [c for c in MANDATORY_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"SCADA file {path}: header lacks mandatory column(s) {missing}")

    known = set(tag_names)
    unknown = tuple(c for c in frame.columns if c not in known and c not in MANDATORY_COLUMNS)
    if unknown:
        log.warning("%s: ignoring %d unknown column(s): %s", path, len(unknown), ", ".join(unknown))

    try:
        ts = pd.to_datetime(frame["timestamp"].str.strip(), utc=True, format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise DataError(f"SCADA file {path}: unparseable timestamp ({exc})") from None
    out = pd.DataFrame({"timestamp": ts, "turbine_id": frame["turbine_id"].str.strip()})
    absent = tuple(n for n in tag_names if n not in frame.columns)
    for name in tag_names:
        if name in frame.columns:
            out[name] = pd.to_numeric(frame[name].str.strip(), errors="coerce").astype(float)
        else:
            out[name] = np.nan
    return RawRecordTable(out, tag_names, unknown, absent)


def _runs(mask: np.ndarray):
    """Yield (start, stop) of runs of True in a 1-D bool array."""
    if not mask.any():
        return
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    yield from zip(edges[::2], edges[1::2])


def _fill_column(values: np.ndarray, max_gap: int):
    """Linear fill of interior gaps of length <= max_gap. Returns (values, valid, interpolated)."""
    values = values.copy()
    valid = np.isfinite(values)
    interp = np.zeros_like(valid)
    n = len(values)
    for start, stop in _runs(~valid):
        length = stop - start
        if start == 0 or stop == n or length > max_gap:
            continue
        left, right = values[start - 1], values[stop]
        frac = np.arange(1, length + 1) / (length + 1)
        values[start:stop] = left + frac * (right - left)
        valid[start:stop] = True
        interp[start:stop] = True
    return values, valid, interp


def regularize_turbine(frame: pd.DataFrame, tag_names, interval: pd.Timedelta, policy: GapPolicy) -> SampleMatrix:
    """Regularize the rows of one turbine (already in file order)."""
    cols = tuple(tag_names)
    if frame.empty:
        return SampleMatrix(pd.DatetimeIndex([], tz="UTC"), cols, np.empty((0, len(cols))), np.empty((0, len(cols)), bool))
    snapped, ok = snap_to_grid(pd.DatetimeIndex(frame["timestamp"]), interval)
    if not ok.all():
        log.warning("dropping %d row(s) with timestamps off the %s grid", int((~ok).sum()), interval)
    work = frame.loc[ok, list(cols)].copy()
    work.index = snapped[ok]
    # last write wins, order-stable
    work = work[~work.index.duplicated(keep="last")].sort_index(kind="stable")
    if work.empty:
        return SampleMatrix(pd.DatetimeIndex([], tz="UTC"), cols, np.empty((0, len(cols))), np.empty((0, len(cols)), bool))
    grid = pd.date_range(work.index[0], work.index[-1], freq=interval, tz="UTC")
    work = work.reindex(grid)
    raw = work.to_numpy(dtype=float)
    values = np.empty_like(raw)
    valid = np.empty(raw.shape, dtype=bool)
    interp = np.empty(raw.shape, dtype=bool)
    for j in range(raw.shape[1]):
        values[:, j], valid[:, j], interp[:, j] = _fill_column(raw[:, j], policy.max_interpolation_gap)
    return SampleMatrix(grid, cols, values, valid, interp)


def regularize(table: RawRecordTable, config: FarmConfig, policy: GapPolicy | None = None) -> dict[str, SampleMatrix]:
    """One grid-aligned SampleMatrix per configured turbine.

    Turbines are independent; rows for turbines not in the config are ignored.
    """
    policy = policy or GapPolicy(config.preprocess.max_gap)
    out = {}
    groups = dict(tuple(table.frame.groupby("turbine_id", sort=False)))
    for turbine in config.turbines:
        frame = groups.get(turbine.turbine_id, table.frame.iloc[0:0])
        out[turbine.turbine_id] = regularize_turbine(frame, table.tag_names, config.sample_interval, policy)
    return out


def in_periods(timestamps: pd.DatetimeIndex, periods) -> np.ndarray:
    mask = np.zeros(len(timestamps), dtype=bool)
    for start, end in periods:
        mask |= (timestamps >= start) & (timestamps < end)
    return mask


def split_train_eval(matrix: SampleMatrix, healthy_periods, min_train_rows: int = 1000):
    """Training rows are those inside a healthy period; monitoring runs on every row."""
    train = matrix.rows(in_periods(matrix.timestamps, healthy_periods))
    if train.n_rows < min_train_rows:
        raise InsufficientTrainingDataError(
            f"insufficient training data: {train.n_rows} rows inside healthy periods, need {min_train_rows}"
        )
    return train, matrix
