"""Score a warning log against ground-truth labels.

A fault is a ``degrading`` label interval ``[onset, failure)``. It counts as
detected when an escalation to level >= 1 for the same turbine-component
falls inside that interval; lead time is ``failure - first such event``.
Escalations inside ``healthy`` intervals are false positives. Exposure is
measured in turbine-years: each turbine's healthy time is the mean of its
components' healthy durations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import pandas as pd

from .domain import format_timestamp

YEAR = pd.Timedelta(days=365.25)


@dataclass(frozen=True)
class FaultOutcome:
    turbine_id: str
    component: str
    onset: pd.Timestamp
    failure: pd.Timestamp
    detected: bool
    first_warning: pd.Timestamp | None = None
    max_level: int = 0

    @property
    def lead_time(self) -> pd.Timedelta | None:
        return self.failure - self.first_warning if self.detected else None


@dataclass
class EvaluationReport:
    faults: list[FaultOutcome] = field(default_factory=list)
    false_positive_events: int = 0
    healthy_turbine_years: float = 0.0
    false_positives: list = field(default_factory=list)

    @property
    def detection_rate(self) -> float | None:
        if not self.faults:
            return None
        return sum(f.detected for f in self.faults) / len(self.faults)

    @property
    def false_positive_rate(self) -> float | None:
        """Warning events per healthy turbine-year."""
        if self.healthy_turbine_years <= 0:
            return None
        return self.false_positive_events / self.healthy_turbine_years

    def to_dict(self) -> dict:
        def ts(t):
            return None if t is None else format_timestamp(t)

        return {
            "faults": [
                {
                    "turbine_id": f.turbine_id,
                    "component": f.component,
                    "onset": ts(f.onset),
                    "failure": ts(f.failure),
                    "detected": f.detected,
                    "first_warning": ts(f.first_warning),
                    "lead_time_days": None if f.lead_time is None else f.lead_time / pd.Timedelta(days=1),
                    "max_level": f.max_level,
                }
                for f in self.faults
            ],
            "detection_rate": self.detection_rate,
            "false_positive_events": self.false_positive_events,
            "healthy_turbine_years": self.healthy_turbine_years,
            "false_positive_rate_per_turbine_year": self.false_positive_rate,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = []
        for f in self.faults:
            head = f"{f.turbine_id}/{f.component} fault {format_timestamp(f.onset)} -> {format_timestamp(f.failure)}:"
            if f.detected:
                days = f.lead_time / pd.Timedelta(days=1)
                lines.append(f"{head} detected {format_timestamp(f.first_warning)}, "
                             f"lead time {days:.1f} days, max level {f.max_level}")
            else:
                lines.append(f"{head} missed (max level {f.max_level})")
        rate = self.detection_rate
        lines.append(f"detection rate: {'n/a' if rate is None else f'{rate:.3f}'} ({len(self.faults)} faults)")
        fpr = self.false_positive_rate
        lines.append(
            f"false positives: {self.false_positive_events} events over {self.healthy_turbine_years:.3f} "
            f"healthy turbine-years ({'n/a' if fpr is None else f'{fpr:.3f}'} per turbine-year)"
        )
        return "\n".join(lines) + "\n"


def _escalations(events):
    return [e for e in events if e.new_level >= 1 and e.new_level > e.old_level]


def evaluate(events, labels) -> EvaluationReport:
    """Build the report from warning events and :class:`~wtsentinel.synth.LabeledInterval` rows."""
    by_target: dict[tuple[str, str], list] = {}
    for e in _escalations(events):
        by_target.setdefault((e.turbine_id, e.component), []).append(e)
    for v in by_target.values():
        v.sort(key=lambda e: e.timestamp)

    report = EvaluationReport()
    healthy_by_turbine: dict[str, dict[str, pd.Timedelta]] = {}
    for lab in sorted(labels, key=lambda l: (l.turbine_id, l.component, l.start)):
        mine = by_target.get((lab.turbine_id, lab.component), [])
        inside = [e for e in mine if lab.start <= e.timestamp < lab.end]
        if lab.label == "degrading":
            report.faults.append(FaultOutcome(
                lab.turbine_id, lab.component, lab.start, lab.end,
                detected=bool(inside),
                first_warning=inside[0].timestamp if inside else None,
                max_level=max((e.new_level for e in inside), default=0),
            ))
        elif lab.label == "healthy":
            report.false_positive_events += len(inside)
            report.false_positives.extend(inside)
            comp = healthy_by_turbine.setdefault(lab.turbine_id, {})
            comp[lab.component] = comp.get(lab.component, pd.Timedelta(0)) + (lab.end - lab.start)
    report.healthy_turbine_years = sum(
        sum(d.values(), pd.Timedelta(0)) / len(d) / YEAR for d in healthy_by_turbine.values()
    )
    return report
