"""Residual Hotelling T^2 chart, region-occupancy KPI and the warning state machine.

KPI definition
--------------
T^2 values are binned into regions 1..3 by chi-square quantiles (default
0.95 and 0.99), giving expected occupancies pi = (0.95, 0.04, 0.01) under
healthy operation. Over a sliding window with observed fractions f::

    KPI = sum_i min(f_i, pi_i) = 1 - TV(f, pi)

i.e. one minus the total-variation distance between the observed and the
expected region histogram. It is 1 exactly when the window matches the
healthy occupancy and falls as mass migrates to the outer regions. The
published method states only these properties, not a formula; this one is
a reconstruction.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd
from scipy import linalg, special

from .aann import reconstruct_batch
from .domain import SampleMatrix
from .errors import DataError, SchemaMismatchError, SingularCovarianceError
from .preprocess import apply_seasonal_adjustment, power_curve_inliers
from .settings import MonitorSettings

if TYPE_CHECKING:
    from .artifact import ModelArtifact


# ------------------------------------------------------------- chi-square


def chi_square_cdf(x: float, dof: int) -> float:
    return float(special.gammainc(dof / 2.0, x / 2.0)) if x > 0 else 0.0


def chi_square_quantile(dof: int, alpha: float, tol: float = 1e-12) -> float:
    """Inverse chi-square CDF by safeguarded Newton iteration on the regularized
    lower incomplete gamma function."""
    if not (isinstance(dof, (int, np.integer)) and dof >= 1):
        raise ValueError(f"dof must be an integer >= 1, got {dof!r}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    k = dof / 2.0
    log_norm = k * math.log(2.0) + math.lgamma(k)

    lo, hi = 0.0, max(1.0, float(dof))
    while chi_square_cdf(hi, dof) < alpha:
        lo, hi = hi, 2.0 * hi
    x = 0.5 * (lo + hi)
    for _ in range(200):
        err = chi_square_cdf(x, dof) - alpha
        if abs(err) <= tol:
            return x
        if err > 0:
            hi = x
        else:
            lo = x
        log_pdf = (k - 1.0) * math.log(x) - x / 2.0 - log_norm
        pdf = math.exp(log_pdf)
        step = x - err / pdf if pdf > 0 else math.nan
        x = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return x


# ------------------------------------------------------------------ chart


@dataclass(frozen=True, eq=False)
class ChartModel:
    mean: np.ndarray
    inv_cov: np.ndarray
    boundaries: tuple[float, float]
    alphas: tuple[float, float] = (0.95, 0.99)
    ridge: float = 1e-6

    @property
    def p(self) -> int:
        return len(self.mean)

    @property
    def expected(self) -> tuple[float, float, float]:
        a1, a2 = self.alphas
        return (a1, a2 - a1, 1.0 - a2)


def _collinear_pair(cov: np.ndarray, columns) -> str:
    sd = np.sqrt(np.clip(np.diag(cov), 0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = cov / np.outer(sd, sd)
    corr = np.where(np.isfinite(corr), np.abs(corr), 1.0)
    np.fill_diagonal(corr, -1.0)
    i, j = np.unravel_index(np.argmax(corr), corr.shape)
    return f"{columns[min(i, j)]!r} and {columns[max(i, j)]!r}"


def fit_residual_chart(residuals, ridge: float = 1e-6, alphas=(0.95, 0.99)) -> ChartModel:
    """Mean, ridge-regularized inverse covariance and chi-square region boundaries."""
    if isinstance(residuals, SampleMatrix):
        columns = residuals.columns
        r = residuals.values[residuals.valid.all(axis=1)]
    else:
        r = np.asarray(residuals, dtype=float)
        columns = tuple(f"col{j}" for j in range(r.shape[1]))
    n, p = r.shape
    if n < 10 * p:
        raise DataError(f"chart fit needs at least {10 * p} residual rows, got {n}")
    if not np.isfinite(r).all():
        raise DataError("residuals must be finite")
    mean = r.mean(axis=0)
    cov = np.cov(r, rowvar=False, ddof=1).reshape(p, p)
    reg = cov + ridge * np.diag(np.diag(cov))
    eig = np.linalg.eigvalsh(reg)
    singular = not eig[-1] > 0 or eig[0] <= 1e-12 * eig[-1]
    if not singular:
        try:
            factor = linalg.cho_factor(reg, lower=True)
        except linalg.LinAlgError:
            singular = True
    if singular:
        raise SingularCovarianceError(
            f"residual covariance is numerically singular; near-collinear columns {_collinear_pair(cov, columns)}"
        )
    inv = linalg.cho_solve(factor, np.eye(p))
    inv = 0.5 * (inv + inv.T)
    q1 = chi_square_quantile(p, alphas[0])
    q2 = chi_square_quantile(p, alphas[1])
    return ChartModel(mean, inv, (q1, q2), tuple(alphas), float(ridge))


def t2_scores(chart: ChartModel, residuals: np.ndarray) -> np.ndarray:
    d = np.atleast_2d(residuals) - chart.mean
    t2 = np.einsum("ij,jk,ik->i", d, chart.inv_cov, d)
    return np.maximum(t2, 0.0)


def t2_score(chart: ChartModel, residual) -> float:
    """(r - mu)' S^-1 (r - mu)."""
    r = np.asarray(residual, dtype=float)
    if r.ndim != 1 or r.shape[0] != chart.p:
        raise DataError(f"expected a residual vector of length {chart.p}, got shape {r.shape}")
    if not np.isfinite(r).all():
        raise DataError("residual must be finite")
    return float(t2_scores(chart, r[None, :])[0])


def classify_region(t2: float, chart: ChartModel) -> int:
    q1, q2 = chart.boundaries
    if t2 <= q1:
        return 1
    if t2 <= q2:
        return 2
    return 3


def classify_regions(t2: np.ndarray, chart: ChartModel) -> np.ndarray:
    q1, q2 = chart.boundaries
    return np.where(t2 <= q1, 1, np.where(t2 <= q2, 2, 3))


# -------------------------------------------------------------------- KPI


def kpi_from_fractions(fractions, expected=(0.95, 0.04, 0.01)) -> float:
    return float(sum(min(f, e) for f, e in zip(fractions, expected)))


class KpiState:
    """Sliding window of the last ``window`` region indices."""

    def __init__(self, window: int = 432, min_window: int | None = None, expected=(0.95, 0.04, 0.01)):
        self.window = window
        self.min_window = max(1, window // 2) if min_window is None else min_window
        self.expected = tuple(expected)
        self.regions: deque[int] = deque()
        self.counts = [0, 0, 0]
        self.value: float | None = None

    @property
    def ready(self) -> bool:
        return len(self.regions) >= self.min_window

    def update(self, region: int) -> float | None:
        if region not in (1, 2, 3):
            raise ValueError(f"region must be 1, 2 or 3, got {region!r}")
        self.regions.append(region)
        self.counts[region - 1] += 1
        if len(self.regions) > self.window:
            self.counts[self.regions.popleft() - 1] -= 1
        if not self.ready:
            return None
        n = len(self.regions)
        self.value = kpi_from_fractions([c / n for c in self.counts], self.expected)
        return self.value


def kpi_update(state: KpiState, region: int):
    """Advance the window; returns ``(state, kpi)`` with kpi None while not ready."""
    return state, state.update(region)


# --------------------------------------------------------------- warnings


@dataclass(frozen=True)
class WarningEvent:
    timestamp: pd.Timestamp
    turbine_id: str
    component: str
    old_level: int
    new_level: int
    kpi: float
    farm_id: str = ""


class WarningState:
    """Level 0..3. Escalates to L once KPI < t_L for ``persistence`` consecutive
    evaluations; returns to 0 only after ``recovery`` consecutive evaluations
    with KPI >= t_1."""

    def __init__(self, thresholds=(0.92, 0.85, 0.75), persistence: int = 3, recovery: int = 144):
        t1, t2, t3 = thresholds
        if not 1 > t1 > t2 > t3 > 0:
            raise ValueError("thresholds must satisfy 1 > t1 > t2 > t3 > 0")
        self.thresholds = tuple(thresholds)
        self.persistence = persistence
        self.recovery = recovery
        self.level = 0
        self.below = [0, 0, 0]
        self.above = 0

    def update(self, kpi, timestamp=None, turbine_id="", component="", farm_id="") -> WarningEvent | None:
        if kpi is None:
            return None
        for i, t in enumerate(self.thresholds):
            self.below[i] = self.below[i] + 1 if kpi < t else 0
        self.above = self.above + 1 if kpi >= self.thresholds[0] else 0
        target = 0
        for i in range(3):
            if self.below[i] >= self.persistence:
                target = i + 1
        old = self.level
        if target > old:
            self.level = target
        elif old > 0 and self.above >= self.recovery:
            self.level = 0
        else:
            return None
        return WarningEvent(timestamp, turbine_id, component, old, self.level, float(kpi), farm_id)


def update_warning_state(state: WarningState, kpi, timestamp=None, turbine_id="", component="", farm_id=""):
    return state, state.update(kpi, timestamp, turbine_id, component, farm_id)


# ----------------------------------------------------------------- stream


@dataclass(eq=False)
class MonitorResult:
    turbine_id: str
    component: str
    timestamps: pd.DatetimeIndex
    t2: np.ndarray
    region: np.ndarray
    kpi: np.ndarray
    level: np.ndarray
    evaluated: np.ndarray
    ready: np.ndarray
    events: list[WarningEvent] = field(default_factory=list)
    farm_id: str = ""

    def __len__(self):
        return len(self.timestamps)

    def kpi_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "timestamp": self.timestamps,
                "turbine_id": self.turbine_id,
                "component": self.component,
                "t2": np.where(self.evaluated, self.t2, np.nan),
                "region": pd.arrays.IntegerArray(np.asarray(self.region, dtype=np.int64),
                                                 ~np.asarray(self.evaluated, dtype=bool)),
                "kpi": self.kpi,
                "level": self.level,
            }
        )


def monitor_stream(models: ModelArtifact, eval_matrix: SampleMatrix, settings: MonitorSettings | None = None) -> MonitorResult:
    """Score every row and run the KPI and warning state machines.

    Rows that are invalid or rejected by the power-curve filter (stops,
    curtailment) do not enter the window; KPI and level hold their values.
    """
    settings = settings or models.monitor_settings
    needed = models.input_columns
    missing = [c for c in needed if c not in eval_matrix.columns]
    if missing:
        raise SchemaMismatchError(
            f"model {models.turbine_id}/{models.component} needs columns {list(needed)}; stream lacks {missing}"
        )
    n = eval_matrix.n_rows
    m = eval_matrix.project(needed, drop_invalid=False)
    row_ok = m.valid.all(axis=1)
    wind = m.column(models.wind_tag)
    power = m.column(models.power_tag)
    row_ok &= power_curve_inliers(wind, power, models.power_curve, models.preprocess_settings.band)

    t2 = np.full(n, np.nan)
    region = np.zeros(n, dtype=np.int64)
    if row_ok.any():
        adjusted = apply_seasonal_adjustment(m.rows(row_ok), models.seasonal)
        x = models.standardizer.transform(adjusted.project(models.tag_list, drop_invalid=False).values)
        r = x - reconstruct_batch(models.aann, x)
        t2[row_ok] = t2_scores(models.chart, r)
        region[row_ok] = classify_regions(t2[row_ok], models.chart)

    kpi_state = KpiState(settings.window, settings.effective_min_window, models.chart.expected)
    warn = WarningState(settings.thresholds, settings.persistence, settings.recovery)
    kpi = np.full(n, np.nan)
    level = np.zeros(n, dtype=np.int64)
    ready = np.zeros(n, dtype=bool)
    events = []
    ts = eval_matrix.timestamps
    current = math.nan
    for i in range(n):
        if row_ok[i]:
            value = kpi_state.update(int(region[i]))
            if value is not None:
                ready[i] = True
                current = value
                ev = warn.update(value, ts[i], models.turbine_id, models.component, models.farm_id)
                if ev is not None:
                    events.append(ev)
        kpi[i] = current
        level[i] = warn.level
    return MonitorResult(
        models.turbine_id, models.component, ts, t2, region, kpi, level, row_ok, ready, events, models.farm_id
    )
