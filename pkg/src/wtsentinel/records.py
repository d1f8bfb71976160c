"""CSV formats for monitoring output.

Warning log: ``timestamp, farm_id, turbine_id, component, old_level, new_level, kpi``.
KPI series: ``timestamp, turbine_id, component, t2, region, kpi, level``.
Timestamps are ISO-8601 UTC with a ``Z`` suffix; floats use round-trip precision.
"""

from __future__ import annotations

import pandas as pd

from .domain import _utc, format_timestamp
from .errors import ConfigError, DataError
from .ingestion import _atomic_write_csv
from .monitor import MonitorResult, WarningEvent

WARNING_COLUMNS = ("timestamp", "farm_id", "turbine_id", "component", "old_level", "new_level", "kpi")
KPI_COLUMNS = ("timestamp", "turbine_id", "component", "t2", "region", "kpi", "level")


def events_frame(events) -> pd.DataFrame:
    rows = [
        (format_timestamp(e.timestamp), e.farm_id, e.turbine_id, e.component, e.old_level, e.new_level, e.kpi)
        for e in events
    ]
    return pd.DataFrame(rows, columns=list(WARNING_COLUMNS))


def write_warning_log(events, path) -> None:
    _atomic_write_csv(events_frame(events), path)


def write_kpi_series(result: MonitorResult, path) -> None:
    frame = result.kpi_frame()
    frame["timestamp"] = [format_timestamp(t) for t in frame["timestamp"]]
    _atomic_write_csv(frame[list(KPI_COLUMNS)], path)


def read_warning_log(path) -> list[WarningEvent]:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read warning log {path}: {exc}") from None
    except pd.errors.EmptyDataError:
        raise DataError(f"warning log {path} is empty (expected a header row)") from None
    missing = [c for c in WARNING_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"warning log {path} lacks columns {missing}")
    events = []
    for i, r in enumerate(frame.itertuples(index=False), start=2):
        try:
            events.append(WarningEvent(
                timestamp=_utc(r.timestamp),
                turbine_id=r.turbine_id,
                component=r.component,
                old_level=int(r.old_level),
                new_level=int(r.new_level),
                kpi=float(r.kpi) if r.kpi != "" else float("nan"),
                farm_id=r.farm_id,
            ))
        except (ValueError, TypeError, ConfigError) as exc:
            raise DataError(f"warning log {path}, line {i}: {exc}") from None
    return events


def read_kpi_series(path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read KPI series {path}: {exc}") from None
    missing = [c for c in KPI_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"KPI series {path} lacks columns {missing}")
    frame["timestamp"] = pd.to_datetime(frame["timestamp"], utc=True, format="ISO8601")
    return frame
