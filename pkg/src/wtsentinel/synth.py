"""Synthetic SCADA farm with injectable component faults.

Signals per turbine:

* wind: AR(1) Gaussian mapped through the normal CDF onto a Weibull marginal
* ambient: annual + daily sinusoid plus noise (shared site signal)
* power: logistic curve between cut-in and rated speed plus noise, with
  occasional curtailment episodes at zero power
* component temperatures: a + b*ambient + c*lagged_load + noise, where the
  load passes through a first-order lag

Faults add a linear temperature ramp to the component's temperature tags,
followed by an outage during which the turbine reports nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
import pandas as pd
from scipy import signal, special

from .domain import ComponentKind, FarmConfig, TagRole, _utc, format_timestamp
from .errors import ConfigError, DataError
from .ingestion import RawRecordTable, _atomic_write_csv

# (a, b, c) per temperature tag position, by component kind
THERMAL_PARAMS = {
    ComponentKind.GEARBOX: [(35.0, 0.6, 30.0), (40.0, 0.5, 22.0), (38.0, 0.55, 26.0)],
    ComponentKind.GENERATOR_BEARING: [(30.0, 0.7, 25.0), (28.0, 0.65, 17.0), (32.0, 0.6, 21.0)],
    ComponentKind.MAIN_BEARING: [(20.0, 0.8, 12.0), (18.0, 0.75, 8.0), (22.0, 0.7, 10.0)],
}
GENERIC_THERMAL = (25.0, 0.7, 15.0)


@dataclass(frozen=True)
class SynthSettings:
    duration_days: float = 365.0
    seed: int = 0
    start: pd.Timestamp = pd.Timestamp("2015-01-01T00:00:00Z")
    wind_shape: float = 2.0
    wind_scale: float = 8.0
    wind_ar: float = 0.97
    ambient_mean: float = 12.0
    ambient_annual_amplitude: float = 10.0
    ambient_daily_amplitude: float = 4.0
    ambient_noise: float = 1.0
    cut_in: float = 3.5
    rated_speed: float = 12.0
    cut_out: float = 25.0
    power_noise_fraction: float = 0.01
    rated_rotor_rpm: float = 16.0
    rotor_noise_rpm: float = 0.1
    thermal_tau_minutes: float = 60.0
    temperature_noise: float = 0.8
    missing_fraction: float = 0.01
    curtailment_fraction: float = 0.005
    curtailment_length: int = 12

    def __post_init__(self):
        object.__setattr__(self, "start", _utc(self.start))
        if self.duration_days < 1:
            raise ConfigError("synthetic duration must be at least 1 day")
        sigmas = (self.ambient_noise, self.power_noise_fraction, self.rotor_noise_rpm, self.temperature_noise)
        if any(s < 0 for s in sigmas):
            raise ConfigError("noise levels must be non-negative")
        if not 0 <= self.wind_ar < 1:
            raise ConfigError("wind_ar must be in [0, 1)")
        if not 0 <= self.missing_fraction < 1 or not 0 <= self.curtailment_fraction < 1:
            raise ConfigError("missing_fraction and curtailment_fraction must be in [0, 1)")

    @classmethod
    def from_mapping(cls, raw: dict | None, **overrides):
        raw = dict(raw or {})
        raw.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown synthetic settings {sorted(unknown)}")
        return cls(**raw)


@dataclass(frozen=True)
class FaultSpec:
    turbine_id: str
    component: ComponentKind
    onset: pd.Timestamp
    failure: pd.Timestamp
    delta_t: float = 15.0
    noise_inflation: float = 1.0
    outage_days: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "component", ComponentKind(self.component))
        object.__setattr__(self, "onset", _utc(self.onset))
        object.__setattr__(self, "failure", _utc(self.failure))
        if not self.onset < self.failure:
            raise ConfigError("fault onset must precede failure")
        if self.delta_t < 0:
            raise ConfigError("fault delta_t must be non-negative")
        if self.noise_inflation < 1 or self.outage_days < 0:
            raise ConfigError("noise_inflation must be >= 1 and outage_days >= 0")

    @property
    def outage_end(self) -> pd.Timestamp:
        return self.failure + pd.Timedelta(days=self.outage_days)


@dataclass(frozen=True)
class LabeledInterval:
    turbine_id: str
    component: str
    label: str  # healthy | degrading | outage
    start: pd.Timestamp
    end: pd.Timestamp


# ------------------------------------------------------------------ signals


def logistic_power(wind, nominal, cut_in=3.5, rated_speed=12.0, cut_out=25.0):
    """Logistic curve reaching ~1% of nominal at cut-in and ~99% at rated speed."""
    wind = np.asarray(wind, dtype=float)
    mid = 0.5 * (cut_in + rated_speed)
    k = 2.0 * math.log(99.0) / (rated_speed - cut_in)
    p = nominal * special.expit(k * (wind - mid))
    return np.where((wind < cut_in) | (wind > cut_out), 0.0, p)


def _grid(config: FarmConfig, settings: SynthSettings) -> pd.DatetimeIndex:
    step = config.sample_interval
    n = int(round(pd.Timedelta(days=settings.duration_days) / step))
    start = pd.Timestamp((settings.start.value // step.value) * step.value, tz="UTC")
    return pd.date_range(start, periods=n, freq=step)


def _ambient(ts: pd.DatetimeIndex, settings: SynthSettings, rng) -> np.ndarray:
    days = (ts - pd.Timestamp("2000-01-01", tz="UTC")) / pd.Timedelta(days=1)
    days = np.asarray(days, dtype=float)
    annual = -np.cos(2 * np.pi * (days - 15.0) / 365.25)  # coldest mid-January
    hour = np.asarray(ts.hour + ts.minute / 60.0, dtype=float)
    daily = np.sin(2 * np.pi * (hour - 9.0) / 24.0)  # warmest mid-afternoon
    return (
        settings.ambient_mean
        + settings.ambient_annual_amplitude * annual
        + settings.ambient_daily_amplitude * daily
        + rng.normal(0.0, settings.ambient_noise, len(ts))
    )


def _wind(n: int, settings: SynthSettings, rng) -> np.ndarray:
    phi = settings.wind_ar
    e = rng.normal(0.0, math.sqrt(1 - phi * phi), n)
    e[0] = rng.normal()
    z = signal.lfilter([1.0], [1.0, -phi], e)
    u = np.clip(special.ndtr(z), 1e-12, 1 - 1e-12)
    return settings.wind_scale * (-np.log1p(-u)) ** (1.0 / settings.wind_shape)


def _thermal_params(config: FarmConfig):
    """Map each component_temperature tag to (a, b, c) by its owning component."""
    params = {}
    for turbine in config.turbines:
        for comp in turbine.components:
            table = THERMAL_PARAMS[comp.kind]
            for i, tag in enumerate(comp.temperature_tags):
                params.setdefault(tag.name, table[min(i, len(table) - 1)])
    return params


def _turbine_frame(config, turbine, index, ts, ambient_site, settings, root_seed):
    rng = np.random.default_rng([root_seed, index + 1])
    n = len(ts)
    nominal = turbine.nominal_power
    wind = _wind(n, settings, rng)
    curve = logistic_power(wind, nominal, settings.cut_in, settings.rated_speed, settings.cut_out)
    power = curve + settings.power_noise_fraction * nominal * rng.standard_normal(n)

    curtailed = np.zeros(n, dtype=bool)
    if settings.curtailment_fraction > 0:
        starts = np.flatnonzero(rng.random(n) < settings.curtailment_fraction / settings.curtailment_length)
        for s in starts:
            curtailed[s:s + settings.curtailment_length] = True
        power[curtailed] = 0.0

    load = np.clip(power / nominal, 0.0, None)
    kappa = 1.0 - math.exp(-config.sample_interval.total_seconds() / (60.0 * settings.thermal_tau_minutes))
    lagged = signal.lfilter([kappa], [1.0, -(1.0 - kappa)], load, zi=[(1.0 - kappa) * load[0]])[0]

    # speed controller tracks the available power; the rotor idles when
    # below cut-in, above cut-out or curtailed
    x = np.where(curtailed, 0.0, curve / nominal)
    rpm = settings.rated_rotor_rpm * (0.45 + 0.55 * x) + rng.normal(0.0, settings.rotor_noise_rpm, n)

    ambient = ambient_site + rng.normal(0.0, 0.2, n)
    thermal = _thermal_params(config)
    cols = {}
    for tag in config.tags:
        role = tag.role
        if role is TagRole.WIND_SPEED:
            cols[tag.name] = wind
        elif role is TagRole.ACTIVE_POWER:
            cols[tag.name] = power
        elif role is TagRole.AMBIENT_TEMPERATURE:
            cols[tag.name] = ambient
        elif role is TagRole.ROTOR_SPEED:
            cols[tag.name] = rpm
        elif role is TagRole.SHAFT_TORQUE:
            omega = rpm * 2 * np.pi / 60.0
            torque = np.divide(power, omega, out=np.zeros(n), where=omega > 0.5)
            cols[tag.name] = torque + rng.normal(0.0, 5.0, n)
        elif role is TagRole.COMPONENT_TEMPERATURE:
            a, b, c = thermal.get(tag.name, GENERIC_THERMAL)
            cols[tag.name] = a + b * ambient + c * lagged + rng.normal(0.0, settings.temperature_noise, n)
        else:
            cols[tag.name] = rng.normal(0.0, 1.0, n)

    frame = pd.DataFrame({"timestamp": ts, "turbine_id": turbine.turbine_id, **cols})
    if settings.missing_fraction > 0:
        gone = rng.random(n) < settings.missing_fraction
        frame.loc[gone, list(config.tag_names)] = np.nan
    return frame


def generate_healthy(config: FarmConfig, settings: SynthSettings) -> RawRecordTable:
    """One row per turbine per grid step; deterministic given ``settings.seed``."""
    ts = _grid(config, settings)
    site_rng = np.random.default_rng([settings.seed, 0])
    ambient = _ambient(ts, settings, site_rng)
    frames = [
        _turbine_frame(config, t, i, ts, ambient, settings, settings.seed) for i, t in enumerate(config.turbines)
    ]
    return RawRecordTable(pd.concat(frames, ignore_index=True), config.tag_names)


def inject_fault(table: RawRecordTable, fault: FaultSpec, config: FarmConfig, seed: int = 0,
                 temperature_noise: float = 0.8) -> RawRecordTable:
    """Ramp the component temperatures from 0 at onset to ``delta_t`` at failure,
    then blank the turbine for ``outage_days``. Every other cell is untouched.

    ``noise_inflation`` > 1 adds independent noise during the ramp so the
    affected tags' total noise sigma becomes ``noise_inflation * temperature_noise``.
    """
    frame = table.frame
    rows = (frame["turbine_id"] == fault.turbine_id).to_numpy()
    if not rows.any():
        raise DataError(f"fault targets unknown turbine {fault.turbine_id!r}")
    span_start, span_end = frame.loc[rows, "timestamp"].min(), frame.loc[rows, "timestamp"].max()
    if fault.onset < span_start or fault.failure > span_end:
        raise DataError(
            f"fault interval {format_timestamp(fault.onset)}..{format_timestamp(fault.failure)} lies outside "
            f"the table span {format_timestamp(span_start)}..{format_timestamp(span_end)}"
        )
    spec = config.turbine(fault.turbine_id).component(fault.component)
    ts = frame["timestamp"]
    out = frame.copy()

    ramp_rows = rows & (ts >= fault.onset).to_numpy() & (ts < fault.failure).to_numpy()
    if fault.delta_t > 0 or fault.noise_inflation > 1:
        elapsed = np.asarray((ts[ramp_rows] - fault.onset) / (fault.failure - fault.onset), dtype=float)
        rng = np.random.default_rng([seed, 7919])
        extra = temperature_noise * math.sqrt(fault.noise_inflation ** 2 - 1.0)
        for tag in spec.temperature_tags:
            delta = fault.delta_t * elapsed
            if extra > 0:
                delta = delta + rng.normal(0.0, extra, len(delta))
            out.loc[ramp_rows, tag.name] = frame.loc[ramp_rows, tag.name].to_numpy() + delta

    outage_rows = rows & (ts >= fault.failure).to_numpy() & (ts < fault.outage_end).to_numpy()
    if outage_rows.any():
        out.loc[outage_rows, list(table.tag_names)] = np.nan
    return RawRecordTable(out, table.tag_names, table.unknown_columns)


def label_ground_truth(faults, span_start, span_end, targets) -> list[LabeledInterval]:
    """Healthy / degrading / outage intervals per (turbine_id, component) target.

    Overlapping faults resolve by severity (outage > degrading > healthy);
    adjacent pieces with the same label merge.
    """
    span_start, span_end = _utc(span_start), _utc(span_end)
    rank = {"healthy": 0, "degrading": 1, "outage": 2}
    out = []
    for turbine_id, component in targets:
        component = ComponentKind(component).value
        mine = [f for f in faults if f.turbine_id == turbine_id and f.component.value == component]
        pieces = []
        for f in mine:
            pieces.append((f.onset, f.failure, "degrading"))
            if f.outage_days > 0:
                pieces.append((f.failure, f.outage_end, "outage"))
        cuts = sorted({span_start, span_end, *(max(span_start, min(span_end, t)) for a, b, _ in pieces for t in (a, b))})
        segments = []
        for a, b in zip(cuts, cuts[1:]):
            if a >= b:
                continue
            label = "healthy"
            for s, e, lab in pieces:
                if s <= a and b <= e and rank[lab] > rank[label]:
                    label = lab
            if segments and segments[-1][2] == label:
                segments[-1] = (segments[-1][0], b, label)
            else:
                segments.append((a, b, label))
        out.extend(LabeledInterval(turbine_id, component, lab, a, b) for a, b, lab in segments)
    return out


# ---------------------------------------------------------------- scenarios


@dataclass(frozen=True)
class Scenario:
    settings: SynthSettings
    faults: tuple[FaultSpec, ...] = ()

    @property
    def span(self):
        start = self.settings.start
        return start, start + pd.Timedelta(days=self.settings.duration_days)


def _fault_time(raw: dict, key: str, start: pd.Timestamp) -> pd.Timestamp:
    if key in raw:
        return _utc(raw[key])
    if f"{key}_day" in raw:
        return start + pd.Timedelta(days=float(raw[f"{key}_day"]))
    raise ConfigError(f"fault needs {key!r} (ISO timestamp) or {key + '_day'!r} (days from start)")


def parse_scenario(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise ConfigError("scenario document must be a mapping")
    allowed = {"seed", "duration_days", "start", "settings", "faults"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"scenario: unknown keys {sorted(unknown)}")
    settings = SynthSettings.from_mapping(
        raw.get("settings"), seed=raw.get("seed"), duration_days=raw.get("duration_days"), start=raw.get("start")
    )
    faults = []
    for f in raw.get("faults") or []:
        if not isinstance(f, dict):
            raise ConfigError("scenario: each fault must be a mapping")
        try:
            faults.append(
                FaultSpec(
                    turbine_id=f["turbine_id"],
                    component=f["component"],
                    onset=_fault_time(f, "onset", settings.start),
                    failure=_fault_time(f, "failure", settings.start),
                    delta_t=float(f.get("delta_t", 15.0)),
                    noise_inflation=float(f.get("noise_inflation", 1.0)),
                    outage_days=float(f.get("outage_days", 30.0)),
                )
            )
        except KeyError as exc:
            raise ConfigError(f"scenario: fault lacks {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"scenario: {exc}") from None
    return Scenario(settings, tuple(faults))


def fig3_scenario(turbine_id: str, component="gearbox", seed: int = 0, *, healthy_days=456, ramp_days=60,
                  outage_days=30, tail_days=30, delta_t=15.0, settings: dict | None = None) -> Scenario:
    """~15 months healthy, a 2-month ramp to failure, a 30-day outage, then recovery."""
    total = healthy_days + ramp_days + outage_days + tail_days
    s = SynthSettings.from_mapping(settings, seed=seed, duration_days=total)
    onset = s.start + pd.Timedelta(days=healthy_days)
    failure = onset + pd.Timedelta(days=ramp_days)
    fault = FaultSpec(turbine_id, component, onset, failure, delta_t, 1.0, outage_days)
    return Scenario(s, (fault,))


def simulate(config: FarmConfig, scenario: Scenario):
    """Healthy table with every scenario fault injected, plus ground-truth labels."""
    table = generate_healthy(config, scenario.settings)
    for i, fault in enumerate(scenario.faults):
        table = inject_fault(table, fault, config, seed=scenario.settings.seed + i,
                             temperature_noise=scenario.settings.temperature_noise)
    targets = [(t.turbine_id, c.kind.value) for t in config.turbines for c in t.components]
    start, end = scenario.span
    labels = label_ground_truth(scenario.faults, start, end, targets)
    return table, labels


def labels_frame(labels) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "turbine_id": [l.turbine_id for l in labels],
            "component": [l.component for l in labels],
            "label": [l.label for l in labels],
            "start": [format_timestamp(l.start) for l in labels],
            "end": [format_timestamp(l.end) for l in labels],
        }
    )


def write_labels(labels, path) -> None:
    _atomic_write_csv(labels_frame(labels), path)


def read_labels(path) -> list[LabeledInterval]:
    try:
        frame = pd.read_csv(path, dtype=str)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read labels file {path}: {exc}") from None
    needed = {"turbine_id", "component", "label", "start", "end"}
    if not needed <= set(frame.columns):
        raise DataError(f"labels file {path} needs columns {sorted(needed)}")
    try:
        return [
            LabeledInterval(r.turbine_id, r.component, r.label, _utc(r.start), _utc(r.end))
            for r in frame.itertuples(index=False)
        ]
    except ConfigError as exc:
        raise DataError(f"labels file {path}: {exc}") from None


DEMO_TAGS = [
    ("wind_speed", "wind_speed"),
    ("active_power", "active_power"),
    ("rotor_speed", "rotor_speed"),
    ("ambient_temp", "ambient_temperature"),
    ("gearbox_oil_temp", "component_temperature"),
    ("gearbox_bearing_temp", "component_temperature"),
    ("gen_bearing_de_temp", "component_temperature"),
    ("gen_bearing_nde_temp", "component_temperature"),
    ("main_bearing_front_temp", "component_temperature"),
    ("main_bearing_rear_temp", "component_temperature"),
]

DEMO_COMPONENTS = [
    {"kind": "gearbox", "tags": ["active_power", "rotor_speed", "gearbox_oil_temp", "gearbox_bearing_temp"]},
    {"kind": "generator_bearing", "tags": ["active_power", "rotor_speed", "gen_bearing_de_temp", "gen_bearing_nde_temp"]},
    {"kind": "main_bearing", "tags": ["active_power", "rotor_speed", "main_bearing_front_temp", "main_bearing_rear_temp"]},
]


def demo_config_document(n_turbines=1, *, farm_id="WF1", nominal_power_kw=2000.0, healthy_days=365.0,
                         start="2015-01-01T00:00:00Z", components=None, **sections) -> dict:
    """A ready-to-validate farm config matching the demo tag set."""
    start = _utc(start)
    comps = DEMO_COMPONENTS if components is None else [c for c in DEMO_COMPONENTS if c["kind"] in components]
    doc = {
        "farm_id": farm_id,
        "sample_interval_seconds": 600,
        "healthy_periods": [[format_timestamp(start), format_timestamp(start + pd.Timedelta(days=healthy_days))]],
        "tags": [{"name": n, "role": r} for n, r in DEMO_TAGS],
        "components": comps,
        "turbines": [{"turbine_id": f"WT{i + 1:02d}", "nominal_power_kw": nominal_power_kw} for i in range(n_turbines)],
    }
    doc.update(sections)
    return doc
