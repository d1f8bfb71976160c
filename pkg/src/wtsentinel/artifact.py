"""One self-contained model file per turbine-component.

Layout (JSON)::

    {"format_version": 1, "created_at": "...", "sha256": "<hex>", "payload": {...}}

The hash covers the canonical (sorted-key, compact) encoding of ``payload``;
``created_at`` sits outside it so reruns differ only in that field.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .aann import AannModel
from .domain import format_timestamp
from .errors import ArtifactError, IntegrityError, VersionError
from .monitor import ChartModel
from .preprocess import MorModel, PowerCurveModel, SeasonalModel, Standardizer
from .settings import MonitorSettings, PreprocessSettings, settings_from_mapping, settings_to_mapping

FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class ModelArtifact:
    farm_id: str
    turbine_id: str
    component: str
    tag_list: tuple[str, ...]
    wind_tag: str
    power_tag: str
    ambient_tag: str
    nominal_power: float
    sample_interval_seconds: float
    standardizer: Standardizer
    seasonal: SeasonalModel
    power_curve: PowerCurveModel
    mor: MorModel
    aann: AannModel
    chart: ChartModel
    preprocess_settings: PreprocessSettings = field(default_factory=PreprocessSettings)
    monitor_settings: MonitorSettings = field(default_factory=MonitorSettings)
    fingerprint: dict = field(default_factory=dict)
    training_summary: dict = field(default_factory=dict)
    created_at: str = ""
    format_version: int = FORMAT_VERSION

    @property
    def input_columns(self) -> tuple[str, ...]:
        cols = [self.wind_tag, self.power_tag, self.ambient_tag]
        cols += [t for t in self.tag_list if t not in cols]
        return tuple(cols)

    @property
    def sample_interval(self) -> pd.Timedelta:
        return pd.Timedelta(seconds=self.sample_interval_seconds)

    @property
    def p(self) -> int:
        return len(self.tag_list)

    @property
    def file_stem(self) -> str:
        return f"{self.farm_id}__{self.turbine_id}__{self.component}"

    def validate(self) -> None:
        p = self.p
        checks = {
            "standardizer": len(self.standardizer.mean) == p and self.standardizer.columns == self.tag_list,
            "aann": self.aann.p == p,
            "chart": self.chart.p == p,
            "mor": self.mor.centroids.shape[1] == p,
        }
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise ArtifactError(f"artifact sub-models disagree on dimension p={p}: {bad}")
        if not self.fingerprint:
            raise ArtifactError("artifact has an empty training fingerprint")


def fingerprint_matrix(matrix) -> dict:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(matrix.values).tobytes())
    h.update(matrix.timestamps.asi8.tobytes())
    h.update("|".join(matrix.columns).encode())
    return {
        "rows": int(matrix.n_rows),
        "start": format_timestamp(matrix.timestamps[0]) if matrix.n_rows else None,
        "end": format_timestamp(matrix.timestamps[-1]) if matrix.n_rows else None,
        "sha256": h.hexdigest(),
    }


# ------------------------------------------------------------ encode/decode


def _arr(a) -> list:
    a = np.asarray(a, dtype=float)
    return [None if not np.isfinite(v) else float(v) for v in a.ravel()] if a.ndim == 1 else [_arr(r) for r in a]


def _np(v) -> np.ndarray:
    return np.array([[np.nan if x is None else x for x in row] for row in v] if v and isinstance(v[0], list)
                    else [np.nan if x is None else x for x in v], dtype=float)


def _payload(a: ModelArtifact) -> dict:
    return {
        "farm_id": a.farm_id,
        "turbine_id": a.turbine_id,
        "component": a.component,
        "tag_list": list(a.tag_list),
        "wind_tag": a.wind_tag,
        "power_tag": a.power_tag,
        "ambient_tag": a.ambient_tag,
        "nominal_power": a.nominal_power,
        "sample_interval_seconds": a.sample_interval_seconds,
        "standardizer": {"columns": list(a.standardizer.columns), "mean": _arr(a.standardizer.mean),
                         "std": _arr(a.standardizer.std)},
        "seasonal": {"ambient_tag": a.seasonal.ambient_tag, "tags": list(a.seasonal.tags),
                     "intercept": _arr(a.seasonal.intercept), "slope": _arr(a.seasonal.slope),
                     "reference_ambient": a.seasonal.reference_ambient,
                     "low_load_threshold": a.seasonal.low_load_threshold},
        "power_curve": {"bin_edges": _arr(a.power_curve.bin_edges), "median": _arr(a.power_curve.median),
                        "spread": _arr(a.power_curve.spread), "counts": [int(c) for c in a.power_curve.counts],
                        "nominal_power": a.power_curve.nominal_power,
                        "min_bin_samples": a.power_curve.min_bin_samples},
        "mor": {"centroids": _arr(a.mor.centroids), "counts": [int(c) for c in a.mor.counts],
                "thresholds": _arr(a.mor.thresholds), "min_cluster_fraction": a.mor.min_cluster_fraction,
                "c": a.mor.c},
        "aann": {"sizes": list(a.aann.sizes), "weights": [_arr(w) for w in a.aann.weights],
                 "biases": [_arr(b) for b in a.aann.biases], "seed": a.aann.seed,
                 "epochs_run": a.aann.epochs_run, "final_loss": a.aann.final_loss},
        "chart": {"mean": _arr(a.chart.mean), "inv_cov": _arr(a.chart.inv_cov),
                  "boundaries": list(a.chart.boundaries), "alphas": list(a.chart.alphas), "ridge": a.chart.ridge},
        "preprocess_settings": settings_to_mapping(a.preprocess_settings),
        "monitor_settings": settings_to_mapping(a.monitor_settings),
        "fingerprint": a.fingerprint,
        "training_summary": a.training_summary,
    }


def _from_payload(d: dict, created_at: str, version: int) -> ModelArtifact:
    s, sa, pc, mo, nn, ch = (d[k] for k in ("standardizer", "seasonal", "power_curve", "mor", "aann", "chart"))
    return ModelArtifact(
        farm_id=d["farm_id"],
        turbine_id=d["turbine_id"],
        component=d["component"],
        tag_list=tuple(d["tag_list"]),
        wind_tag=d["wind_tag"],
        power_tag=d["power_tag"],
        ambient_tag=d["ambient_tag"],
        nominal_power=d["nominal_power"],
        sample_interval_seconds=d["sample_interval_seconds"],
        standardizer=Standardizer(tuple(s["columns"]), _np(s["mean"]), _np(s["std"])),
        seasonal=SeasonalModel(sa["ambient_tag"], tuple(sa["tags"]), _np(sa["intercept"]), _np(sa["slope"]),
                               sa["reference_ambient"], sa["low_load_threshold"]),
        power_curve=PowerCurveModel(_np(pc["bin_edges"]), _np(pc["median"]), _np(pc["spread"]),
                                    np.array(pc["counts"], dtype=np.int64), pc["nominal_power"],
                                    pc["min_bin_samples"]),
        mor=MorModel(_np(mo["centroids"]), np.array(mo["counts"], dtype=np.int64), _np(mo["thresholds"]),
                     mo["min_cluster_fraction"], mo["c"]),
        aann=AannModel(tuple(nn["sizes"]), tuple(_np(w) for w in nn["weights"]),
                       tuple(_np(b) for b in nn["biases"]), nn["seed"], nn["epochs_run"], nn["final_loss"]),
        chart=ChartModel(_np(ch["mean"]), _np(ch["inv_cov"]), tuple(ch["boundaries"]), tuple(ch["alphas"]),
                         ch["ridge"]),
        preprocess_settings=settings_from_mapping(PreprocessSettings, d["preprocess_settings"], "preprocess"),
        monitor_settings=settings_from_mapping(MonitorSettings, d["monitor_settings"], "monitor"),
        fingerprint=d["fingerprint"],
        training_summary=d["training_summary"],
        created_at=created_at,
        format_version=version,
    )


def _canonical(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False).encode()


def dumps_model(artifact: ModelArtifact) -> str:
    artifact.validate()
    payload = _payload(artifact)
    doc = {
        "format_version": FORMAT_VERSION,
        "created_at": artifact.created_at or format_timestamp(pd.Timestamp.now(tz="UTC")),
        "sha256": hashlib.sha256(_canonical(payload)).hexdigest(),
        "payload": payload,
    }
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def loads_model(text: str, source: str = "<string>") -> ModelArtifact:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"model file {source} is corrupted or truncated: {exc}") from None
    if not isinstance(doc, dict) or "payload" not in doc or "sha256" not in doc:
        raise IntegrityError(f"model file {source} lacks payload or integrity hash")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(f"model file {source} has format version {version}; this build reads version {FORMAT_VERSION}")
    if hashlib.sha256(_canonical(doc["payload"])).hexdigest() != doc["sha256"]:
        raise IntegrityError(f"model file {source} failed its integrity check")
    try:
        artifact = _from_payload(doc["payload"], doc.get("created_at", ""), version)
    except (KeyError, TypeError, ValueError) as exc:
        raise IntegrityError(f"model file {source} has a malformed payload: {exc}") from None
    artifact.validate()
    return artifact


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(artifact: ModelArtifact, path) -> Path:
    path = Path(path)
    atomic_write_text(path, dumps_model(artifact))
    return path


def load_model(path) -> ModelArtifact:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ArtifactError(f"cannot read model file {path}: {exc}") from None
    return loads_model(text, str(path))
