"""Figures and a summary table from ``sentinel monitor`` output.

Each turbine-component gets a PNG with three stacked panels, T2 (log
scale), KPI with the warning thresholds, and the warning level, with any
labelled degrading/outage intervals shaded. ``summary.csv`` holds one row
per turbine-component.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd
from matplotlib.figure import Figure

from .errors import DataError
from .ingestion import _atomic_write_csv
from .records import read_kpi_series, read_warning_log

KPI_SUFFIX = ".kpi.csv"
WARNINGS_SUFFIX = ".warnings.csv"
SHADE = {"degrading": ("tab:orange", 0.18), "outage": ("0.5", 0.25)}
LEVEL_COLORS = ("tab:green", "gold", "tab:orange", "tab:red")


def summarize(kpi: pd.DataFrame, events, healthy_kpi: float = 0.95) -> dict:
    ready = kpi["kpi"].notna().to_numpy()
    values = kpi["kpi"].to_numpy(dtype=float)
    escalations = [e for e in events if e.new_level > e.old_level]
    return {
        "rows": len(kpi),
        "evaluated_rows": int(kpi["region"].notna().sum()),
        "ready_rows": int(ready.sum()),
        "fraction_kpi_nominal": float(np.mean(values[ready] >= healthy_kpi)) if ready.any() else float("nan"),
        "min_kpi": float(np.nanmin(values)) if ready.any() else float("nan"),
        "max_level": int(kpi["level"].max()) if len(kpi) else 0,
        "events": len(events),
        "first_escalation": escalations[0].timestamp.strftime("%Y-%m-%dT%H:%M:%SZ") if escalations else "",
    }


def plot_component(kpi: pd.DataFrame, events, path, *, thresholds=(0.92, 0.85, 0.75), labels=(), title=""):
    fig = Figure(figsize=(10, 7), constrained_layout=True)
    ax_t2, ax_kpi, ax_lvl = fig.subplots(3, 1, sharex=True, gridspec_kw={"height_ratios": [2, 2, 1]})
    ts = kpi["timestamp"]

    for lab in labels:
        if lab.label in SHADE:
            color, alpha = SHADE[lab.label]
            for ax in (ax_t2, ax_kpi, ax_lvl):
                ax.axvspan(lab.start, lab.end, color=color, alpha=alpha, lw=0)

    t2 = kpi["t2"].to_numpy(dtype=float)
    ok = np.isfinite(t2) & (t2 > 0)
    ax_t2.plot(ts[ok], t2[ok], ",", color="tab:blue", alpha=0.4, rasterized=True)
    ax_t2.set_yscale("log")
    ax_t2.set_ylabel("T$^2$")

    ax_kpi.plot(ts, kpi["kpi"], color="k", lw=0.8)
    for level, t in enumerate(thresholds, start=1):
        ax_kpi.axhline(t, color=LEVEL_COLORS[level], lw=0.8, ls="--", label=f"t{level} = {t:g}")
    ax_kpi.set_ylim(0, 1.02)
    ax_kpi.set_ylabel("KPI")
    ax_kpi.legend(loc="lower left", fontsize=8, frameon=False)

    ax_lvl.step(ts, kpi["level"], where="post", color="tab:red", lw=1.0)
    for e in events:
        ax_lvl.plot(e.timestamp, e.new_level, "o", ms=3, color=LEVEL_COLORS[e.new_level])
    ax_lvl.set_ylim(-0.3, 3.3)
    ax_lvl.set_yticks([0, 1, 2, 3])
    ax_lvl.set_ylabel("level")
    ax_lvl.set_xlabel("time (UTC)")
    if title:
        ax_t2.set_title(title)
    fig.savefig(path, dpi=110, metadata={"Software": None})
    return Path(path)


def render_report(monitor_dir, out_dir, *, labels=(), thresholds=(0.92, 0.85, 0.75)) -> list[Path]:
    """Render every ``*.kpi.csv`` under ``monitor_dir``; returns written paths."""
    monitor_dir, out_dir = Path(monitor_dir), Path(out_dir)
    kpi_files = sorted(monitor_dir.glob(f"*{KPI_SUFFIX}"))
    if not kpi_files:
        raise DataError(f"no *{KPI_SUFFIX} files in {monitor_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)
    written, rows = [], []
    for kpi_path in kpi_files:
        stem = kpi_path.name[: -len(KPI_SUFFIX)]
        kpi = read_kpi_series(kpi_path)
        warn_path = monitor_dir / f"{stem}{WARNINGS_SUFFIX}"
        events = read_warning_log(warn_path) if warn_path.exists() else []
        turbine = str(kpi["turbine_id"].iloc[0]) if len(kpi) else ""
        component = str(kpi["component"].iloc[0]) if len(kpi) else ""
        mine = [l for l in labels if l.turbine_id == turbine and l.component == component]
        written.append(plot_component(kpi, events, out_dir / f"{stem}.png", thresholds=thresholds, labels=mine,
                                      title=f"{turbine} {component}"))
        rows.append({"turbine_id": turbine, "component": component, **summarize(kpi, events)})
    summary = out_dir / "summary.csv"
    _atomic_write_csv(pd.DataFrame(rows), summary)
    written.append(summary)
    return written
