"""Core vocabulary: tags, farm/turbine/component configuration, sample matrices."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .errors import ConfigError, InsufficientTrainingDataError, MissingTagError
from .settings import (
    MonitorSettings,
    PreprocessSettings,
    TrainSettings,
    settings_from_mapping,
    settings_to_mapping,
)

CONFIG_SCHEMA_VERSION = 1
DEFAULT_SAMPLE_INTERVAL = pd.Timedelta(seconds=600)


class TagRole(str, enum.Enum):
    ACTIVE_POWER = "active_power"
    WIND_SPEED = "wind_speed"
    ROTOR_SPEED = "rotor_speed"
    SHAFT_TORQUE = "shaft_torque"
    AMBIENT_TEMPERATURE = "ambient_temperature"
    COMPONENT_TEMPERATURE = "component_temperature"
    OTHER = "other"


class ComponentKind(str, enum.Enum):
    GEARBOX = "gearbox"
    GENERATOR_BEARING = "generator_bearing"
    MAIN_BEARING = "main_bearing"


MANDATORY_ROLES = (TagRole.AMBIENT_TEMPERATURE, TagRole.ACTIVE_POWER, TagRole.WIND_SPEED)


@dataclass(frozen=True)
class TagId:
    name: str
    role: TagRole

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name.strip():
            raise ConfigError("tag name must be a non-empty string")
        object.__setattr__(self, "role", TagRole(self.role))


@dataclass(frozen=True)
class ComponentSpec:
    kind: ComponentKind
    tag_list: tuple[TagId, ...]

    def __post_init__(self):
        object.__setattr__(self, "kind", ComponentKind(self.kind))
        object.__setattr__(self, "tag_list", tuple(self.tag_list))
        if len(self.tag_list) < 2:
            raise ConfigError(
                f"component {self.kind.value}: multivariate chart needs at least 2 tags, got {len(self.tag_list)}"
            )
        names = [t.name for t in self.tag_list]
        if len(set(names)) != len(names):
            raise ConfigError(f"component {self.kind.value}: repeated tag in tag list")
        if not self.temperature_tags:
            raise ConfigError(f"component {self.kind.value}: needs at least one component_temperature tag")

    @property
    def temperature_tags(self) -> tuple[TagId, ...]:
        return tuple(t for t in self.tag_list if t.role is TagRole.COMPONENT_TEMPERATURE)

    @property
    def tag_names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.tag_list)

    @property
    def p(self) -> int:
        return len(self.tag_list)


@dataclass(frozen=True)
class TurbineConfig:
    turbine_id: str
    nominal_power: float
    components: tuple[ComponentSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.turbine_id:
            raise ConfigError("turbine_id must be non-empty")
        if not self.nominal_power > 0:
            raise ConfigError(f"turbine {self.turbine_id}: nominal_power must be > 0")
        kinds = [c.kind for c in self.components]
        if len(set(kinds)) != len(kinds):
            raise ConfigError(f"turbine {self.turbine_id}: duplicate component kind")

    def component(self, kind) -> ComponentSpec:
        kind = ComponentKind(kind)
        for c in self.components:
            if c.kind is kind:
                return c
        raise ConfigError(f"turbine {self.turbine_id} has no component {kind.value}")


@dataclass(frozen=True)
class FarmConfig:
    farm_id: str
    tags: tuple[TagId, ...]
    turbines: tuple[TurbineConfig, ...]
    sample_interval: pd.Timedelta = DEFAULT_SAMPLE_INTERVAL
    healthy_periods: tuple[tuple[pd.Timestamp, pd.Timestamp], ...] = ()
    preprocess: PreprocessSettings = field(default_factory=PreprocessSettings)
    training: TrainSettings = field(default_factory=TrainSettings)
    monitor: MonitorSettings = field(default_factory=MonitorSettings)

    def tag(self, name: str) -> TagId:
        for t in self.tags:
            if t.name == name:
                return t
        raise ConfigError(f"unknown tag {name!r}")

    def tag_for_role(self, role) -> TagId:
        role = TagRole(role)
        for t in self.tags:
            if t.role is role:
                return t
        raise ConfigError(f"no tag with role {role.value}")

    @property
    def tag_names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.tags)

    def turbine(self, turbine_id: str) -> TurbineConfig:
        for t in self.turbines:
            if t.turbine_id == turbine_id:
                return t
        raise ConfigError(f"unknown turbine {turbine_id!r}")


def _utc(value) -> pd.Timestamp:
    try:
        ts = pd.Timestamp(value)
    except (ValueError, TypeError):
        raise ConfigError(f"cannot parse timestamp {value!r}") from None
    if ts.tzinfo is None:
        return ts.tz_localize("UTC")
    return ts.tz_convert("UTC")


def format_timestamp(ts: pd.Timestamp) -> str:
    return ts.tz_convert("UTC").strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_period(raw):
    if isinstance(raw, str):
        if "/" not in raw:
            raise ConfigError(f"healthy period {raw!r} is not an ISO-8601 start/end interval")
        raw = raw.split("/", 1)
    if isinstance(raw, dict):
        raw = (raw.get("start"), raw.get("end"))
    if not isinstance(raw, (list, tuple)) or len(raw) != 2:
        raise ConfigError(f"healthy period {raw!r} must be a [start, end] pair")
    start, end = _utc(raw[0]), _utc(raw[1])
    if not start < end:
        raise ConfigError(f"healthy period {format_timestamp(start)}..{format_timestamp(end)}: start must precede end")
    return start, end


def _parse_component(raw, tags_by_name, where):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: component entry must be a mapping")
    kind = raw.get("kind")
    try:
        kind = ComponentKind(kind)
    except ValueError:
        raise ConfigError(f"{where}: unknown component kind {kind!r}") from None
    names = raw.get("tags")
    if not isinstance(names, list):
        raise ConfigError(f"{where}: component {kind.value} needs a 'tags' list")
    tag_list = []
    for n in names:
        if n not in tags_by_name:
            raise ConfigError(f"{where}: component {kind.value} references undeclared tag {n!r}")
        tag_list.append(tags_by_name[n])
    return ComponentSpec(kind, tuple(tag_list))


def validate_farm_config(raw, *, require_healthy_periods: bool = True) -> FarmConfig:
    """Validate a parsed config document and fill in defaults.

    ``require_healthy_periods`` is relaxed only by commands that never train
    (simulation); training with no healthy span is impossible.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config document must be a mapping")
    version = raw.get("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema_version {version} (expected {CONFIG_SCHEMA_VERSION})")
    farm_id = raw.get("farm_id")
    if not isinstance(farm_id, str) or not farm_id:
        raise ConfigError("farm_id must be a non-empty string")

    interval_s = raw.get("sample_interval_seconds", DEFAULT_SAMPLE_INTERVAL.total_seconds())
    if not isinstance(interval_s, (int, float)) or interval_s <= 0:
        raise ConfigError("sample_interval_seconds must be a positive number")
    interval = pd.Timedelta(seconds=interval_s)

    raw_tags = raw.get("tags")
    if not isinstance(raw_tags, list) or not raw_tags:
        raise ConfigError("tags must be a non-empty list of {name, role}")
    tags = []
    for t in raw_tags:
        if not isinstance(t, dict):
            raise ConfigError("each tag must be a mapping with name and role")
        try:
            tags.append(TagId(t.get("name"), TagRole(t.get("role", "other"))))
        except ValueError:
            raise ConfigError(f"tag {t.get('name')!r}: unknown role {t.get('role')!r}") from None
    names = [t.name for t in tags]
    dup = {n for n in names if names.count(n) > 1}
    if dup:
        raise ConfigError(f"duplicate tag names: {sorted(dup)}")
    for role in MANDATORY_ROLES:
        count = sum(t.role is role for t in tags)
        if count != 1:
            raise ConfigError(f"exactly one tag with role {role.value} is required, found {count}")
    tags_by_name = {t.name: t for t in tags}

    default_components = raw.get("components")
    raw_turbines = raw.get("turbines")
    if not isinstance(raw_turbines, list) or not raw_turbines:
        raise ConfigError("turbines must be a non-empty list")
    turbines = []
    seen = set()
    for rt in raw_turbines:
        if not isinstance(rt, dict):
            raise ConfigError("each turbine must be a mapping")
        tid = rt.get("turbine_id")
        if not isinstance(tid, str) or not tid:
            raise ConfigError("turbine_id must be a non-empty string")
        if tid in seen:
            raise ConfigError(f"duplicate turbine id {tid!r}")
        seen.add(tid)
        power = rt.get("nominal_power_kw")
        if not isinstance(power, (int, float)):
            raise ConfigError(f"turbine {tid}: nominal_power_kw must be a number")
        comps_raw = rt.get("components", default_components)
        if not isinstance(comps_raw, list) or not comps_raw:
            raise ConfigError(f"turbine {tid}: needs a non-empty components list")
        comps = tuple(_parse_component(c, tags_by_name, f"turbine {tid}") for c in comps_raw)
        turbines.append(TurbineConfig(tid, float(power), comps))

    periods_raw = raw.get("healthy_periods") or []
    if not isinstance(periods_raw, list):
        raise ConfigError("healthy_periods must be a list")
    periods = sorted((_parse_period(p) for p in periods_raw), key=lambda p: p[0])
    for (s0, e0), (s1, e1) in zip(periods, periods[1:]):
        if s1 < e0:
            raise ConfigError("healthy_periods overlap")
    if require_healthy_periods and not periods:
        raise InsufficientTrainingDataError("insufficient training data: healthy_periods is empty")

    training_raw = dict(raw.get("training") or {})
    if "seed" not in training_raw and "seed" in raw:
        training_raw["seed"] = raw["seed"]
    return FarmConfig(
        farm_id=farm_id,
        tags=tuple(tags),
        turbines=tuple(turbines),
        sample_interval=interval,
        healthy_periods=tuple(periods),
        preprocess=settings_from_mapping(PreprocessSettings, raw.get("preprocess"), "preprocess"),
        training=settings_from_mapping(TrainSettings, training_raw, "training"),
        monitor=settings_from_mapping(MonitorSettings, raw.get("monitor"), "monitor"),
    )


def farm_config_to_document(config: FarmConfig) -> dict:
    return {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "farm_id": config.farm_id,
        "sample_interval_seconds": config.sample_interval.total_seconds(),
        "healthy_periods": [[format_timestamp(s), format_timestamp(e)] for s, e in config.healthy_periods],
        "tags": [{"name": t.name, "role": t.role.value} for t in config.tags],
        "turbines": [
            {
                "turbine_id": t.turbine_id,
                "nominal_power_kw": t.nominal_power,
                "components": [{"kind": c.kind.value, "tags": list(c.tag_names)} for c in t.components],
            }
            for t in config.turbines
        ],
        "preprocess": settings_to_mapping(config.preprocess),
        "training": settings_to_mapping(config.training),
        "monitor": settings_to_mapping(config.monitor),
    }


def load_farm_config(path, *, require_healthy_periods: bool = True) -> FarmConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML/JSON: {exc}") from None
    return validate_farm_config(raw, require_healthy_periods=require_healthy_periods)


@dataclass(frozen=True, eq=False)
class SampleMatrix:
    """Time-indexed n x p matrix with an explicit per-cell validity mask.

    Invalid cells hold NaN in ``values`` but ``valid`` is authoritative.
    ``interpolated`` marks cells filled by gap interpolation (still valid).
    """

    timestamps: pd.DatetimeIndex
    columns: tuple[str, ...]
    values: np.ndarray
    valid: np.ndarray
    interpolated: np.ndarray | None = None

    def __post_init__(self):
        ts = pd.DatetimeIndex(self.timestamps)
        if ts.tz is None:
            ts = ts.tz_localize("UTC")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "columns", tuple(self.columns))
        values = np.array(self.values, dtype=float, copy=True).reshape(len(ts), len(self.columns))
        valid = np.array(self.valid, dtype=bool, copy=True).reshape(values.shape)
        interp = (
            np.zeros(values.shape, dtype=bool)
            if self.interpolated is None
            else np.array(self.interpolated, dtype=bool, copy=True).reshape(values.shape)
        )
        values[~valid] = np.nan
        for arr in (values, valid, interp):
            arr.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)
        object.__setattr__(self, "interpolated", interp)
        if not (ts.is_monotonic_increasing and ts.is_unique):
            raise ValueError("timestamps must be strictly increasing")

    @classmethod
    def from_arrays(cls, timestamps, columns, values, valid=None):
        values = np.asarray(values, dtype=float)
        if valid is None:
            valid = np.isfinite(values)
        return cls(pd.DatetimeIndex(timestamps), tuple(columns), values, valid)

    @property
    def n_rows(self) -> int:
        return len(self.timestamps)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def column_index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise MissingTagError(name) from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.column_index(name)]

    def rows(self, mask) -> SampleMatrix:
        mask = np.asarray(mask)
        return SampleMatrix(
            self.timestamps[mask], self.columns, self.values[mask], self.valid[mask], self.interpolated[mask]
        )

    def project(self, names, *, drop_invalid: bool = True) -> SampleMatrix:
        idx = [self.column_index(n) for n in names]
        out = SampleMatrix(
            self.timestamps, tuple(names), self.values[:, idx], self.valid[:, idx], self.interpolated[:, idx]
        )
        if drop_invalid:
            out = out.rows(out.valid.all(axis=1))
        return out

    def with_values(self, values: np.ndarray, columns=None) -> SampleMatrix:
        columns = self.columns if columns is None else tuple(columns)
        return SampleMatrix(self.timestamps, columns, values, self.valid, self.interpolated)

    def equals(self, other: SampleMatrix) -> bool:
        return (
            self.columns == other.columns
            and self.timestamps.equals(other.timestamps)
            and np.array_equal(self.valid, other.valid)
            and np.array_equal(self.interpolated, other.interpolated)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )


def select_component_samples(matrix: SampleMatrix, spec: ComponentSpec) -> SampleMatrix:
    """Project onto the component's tags (in spec order) and drop rows with any invalid selected cell."""
    return matrix.project(spec.tag_names)


def snap_to_grid(timestamps: pd.DatetimeIndex, interval: pd.Timedelta, tolerance: float = 0.1):
    """Round timestamps to the nearest multiple of ``interval`` since the Unix epoch.

    Returns ``(snapped, ok)``; ``ok`` is False where the offset exceeds
    ``tolerance`` of the interval.
    """
    ns = timestamps.asi8
    step = interval.value
    nearest = np.round(ns / step).astype(np.int64) * step
    ok = np.abs(ns - nearest) <= tolerance * step
    return pd.DatetimeIndex(nearest, tz="UTC"), ok
