"""Train one model per turbine-component on healthy data; monitor streams with them."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .aann import init_aann, residuals, train_aann
from .artifact import ModelArtifact, fingerprint_matrix
from .domain import ComponentSpec, FarmConfig, SampleMatrix, TagRole, TurbineConfig
from .errors import InsufficientTrainingDataError
from .ingestion import split_train_eval
from .monitor import MonitorResult, fit_residual_chart, monitor_stream
from .preprocess import (
    apply_seasonal_adjustment,
    apply_standardizer,
    filter_power_curve_outliers,
    fit_power_curve,
    fit_seasonal_model,
    fit_standardizer,
    mor_filter,
    mor_fit,
)

log = logging.getLogger(__name__)


@dataclass
class TrainingReport:
    turbine_id: str
    component: str
    rows_loaded: int = 0
    rows_after_power_curve: int = 0
    rows_after_mor: int = 0
    epochs_run: int = 0
    final_train_loss: float = float("nan")
    final_validation_loss: float = float("nan")
    history: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "rows_loaded": self.rows_loaded,
            "rows_after_power_curve": self.rows_after_power_curve,
            "rows_after_mor": self.rows_after_mor,
            "epochs_run": self.epochs_run,
            "final_train_loss": self.final_train_loss,
            "final_validation_loss": self.final_validation_loss,
        }


def input_columns(config: FarmConfig, spec: ComponentSpec) -> tuple[str, ...]:
    cols = [config.tag_for_role(r).name for r in (TagRole.WIND_SPEED, TagRole.ACTIVE_POWER, TagRole.AMBIENT_TEMPERATURE)]
    cols += [t for t in spec.tag_names if t not in cols]
    return tuple(cols)


def train_component(config: FarmConfig, turbine: TurbineConfig, spec: ComponentSpec, matrix: SampleMatrix):
    """Clean the healthy rows of ``matrix`` and fit every sub-model.

    Returns ``(artifact, report)``.
    """
    pre = config.preprocess
    wind_tag = config.tag_for_role(TagRole.WIND_SPEED).name
    power_tag = config.tag_for_role(TagRole.ACTIVE_POWER).name
    ambient_tag = config.tag_for_role(TagRole.AMBIENT_TEMPERATURE).name
    report = TrainingReport(turbine.turbine_id, spec.kind.value)
    where = f"{turbine.turbine_id}/{spec.kind.value}"

    train, _ = split_train_eval(matrix, config.healthy_periods, pre.min_train_rows)
    m = train.project(input_columns(config, spec))
    report.rows_loaded = m.n_rows
    if m.n_rows < pre.min_train_rows:
        raise InsufficientTrainingDataError(
            f"{where}: insufficient training data: {m.n_rows} fully valid healthy rows, need {pre.min_train_rows}"
        )

    curve = fit_power_curve(m.column(wind_tag), m.column(power_tag), turbine.nominal_power,
                            bin_width=pre.bin_width, cut_out=pre.cut_out, min_bin_samples=pre.min_bin_samples)
    m = m.rows(filter_power_curve_outliers(m, curve, wind_tag, power_tag, pre.band))
    report.rows_after_power_curve = m.n_rows

    seasonal = fit_seasonal_model(m, spec, turbine.nominal_power, pre.low_load_threshold,
                                  ambient_tag=ambient_tag, power_tag=power_tag)
    m = apply_seasonal_adjustment(m, seasonal)

    x = m.project(spec.tag_names)
    standardizer = fit_standardizer(x)
    z = apply_standardizer(x, standardizer)

    mor = mor_fit(z, pre.k, config.training.seed, c=pre.c, min_cluster_fraction=pre.min_cluster_fraction)
    z = z.rows(mor_filter(z, mor))
    report.rows_after_mor = z.n_rows
    if z.n_rows < pre.min_train_rows:
        raise InsufficientTrainingDataError(
            f"{where}: insufficient training data: {z.n_rows} rows survive cleaning, need {pre.min_train_rows}"
        )

    model = init_aann(spec.p, config.training)
    model, history = train_aann(model, z, config.training)
    report.history = history
    report.epochs_run = len(history)
    report.final_train_loss = float(model.final_loss) if model.final_loss is not None else float("nan")
    report.final_validation_loss = min(v for _, v in history) if history else float("nan")

    chart = fit_residual_chart(residuals(model, z), config.monitor.ridge, config.monitor.alphas)

    artifact = ModelArtifact(
        farm_id=config.farm_id,
        turbine_id=turbine.turbine_id,
        component=spec.kind.value,
        tag_list=spec.tag_names,
        wind_tag=wind_tag,
        power_tag=power_tag,
        ambient_tag=ambient_tag,
        nominal_power=turbine.nominal_power,
        sample_interval_seconds=config.sample_interval.total_seconds(),
        standardizer=standardizer,
        seasonal=seasonal,
        power_curve=curve,
        mor=mor,
        aann=model,
        chart=chart,
        preprocess_settings=pre,
        monitor_settings=config.monitor,
        fingerprint=fingerprint_matrix(train.project(input_columns(config, spec), drop_invalid=False)),
        training_summary=report.summary(),
    )
    log.info("%s: loaded %d, after power curve %d, after MOR %d, epochs %d", where, report.rows_loaded,
             report.rows_after_power_curve, report.rows_after_mor, report.epochs_run)
    return artifact, report


def train_farm(config: FarmConfig, matrices: dict[str, SampleMatrix]):
    """Train every configured turbine-component; returns a list of (artifact, report)."""
    out = []
    for turbine in config.turbines:
        matrix = matrices[turbine.turbine_id]
        for spec in turbine.components:
            out.append(train_component(config, turbine, spec, matrix))
    return out


def monitor_farm(artifacts, matrices: dict[str, SampleMatrix]) -> list[MonitorResult]:
    results = []
    for artifact in artifacts:
        if artifact.turbine_id not in matrices:
            log.warning("no monitoring data for turbine %s", artifact.turbine_id)
            continue
        results.append(monitor_stream(artifact, matrices[artifact.turbine_id]))
    return results
