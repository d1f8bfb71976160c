"""Training-set cleaning: power-curve outliers, seasonal temperature adjustment,
standardization and k-means based multivariate outlier removal (MOR).

Stage order is fixed: power-curve filter -> seasonal adjustment ->
standardize -> MOR. MOR runs in standardized space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import ComponentSpec, SampleMatrix
from .errors import ClusteringError, DataError

MAD_TO_SIGMA = 1.4826


# ---------------------------------------------------------------- power curve


@dataclass(frozen=True)
class PowerCurveModel:
    bin_edges: np.ndarray
    median: np.ndarray
    spread: np.ndarray
    counts: np.ndarray
    nominal_power: float
    min_bin_samples: int = 10

    @property
    def usable(self) -> np.ndarray:
        return self.counts >= self.min_bin_samples

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    def bin_index(self, wind: np.ndarray) -> np.ndarray:
        """Bin of each wind speed, or -1 outside [0, cut-out]."""
        wind = np.asarray(wind, dtype=float)
        idx = np.searchsorted(self.bin_edges, wind, side="right") - 1
        idx[wind == self.bin_edges[-1]] = len(self.bin_edges) - 2
        idx[(wind < self.bin_edges[0]) | (wind > self.bin_edges[-1]) | ~np.isfinite(wind)] = -1
        return idx

    def expected_power(self, wind: np.ndarray) -> np.ndarray:
        """Bin medians, linearly interpolated between centres of usable bins."""
        usable = self.usable
        if not usable.any():
            return np.full(np.shape(wind), np.nan)
        return np.interp(wind, self.centers[usable], self.median[usable])


def _bin_stats(idx, power, n_bins, reference=None):
    median = np.full(n_bins, np.nan)
    spread = np.full(n_bins, np.nan)
    counts = np.bincount(idx[idx >= 0], minlength=n_bins)
    order = np.argsort(idx, kind="stable")
    sorted_idx = idx[order]
    bounds = np.searchsorted(sorted_idx, np.arange(n_bins + 1))
    for b in range(n_bins):
        sel = order[bounds[b]:bounds[b + 1]]
        if len(sel) == 0:
            continue
        median[b] = np.median(power[sel])
        if reference is not None:
            dev = power[sel] - reference[sel]
            spread[b] = MAD_TO_SIGMA * np.median(np.abs(dev - np.median(dev)))
    return median, spread, counts


def fit_power_curve(wind, power, nominal, *, bin_width=0.5, cut_out=25.0, min_bin_samples=10, min_pairs=500):
    """Robust binned power curve.

    Spread is the MAD-based sigma of power about the interpolated median
    curve, so the slope of the curve inside a bin does not inflate it.
    """
    wind = np.asarray(wind, dtype=float)
    power = np.asarray(power, dtype=float)
    ok = np.isfinite(wind) & np.isfinite(power)
    wind, power = wind[ok], power[ok]
    if len(wind) < min_pairs:
        raise DataError(f"power curve fit needs at least {min_pairs} valid (wind, power) pairs, got {len(wind)}")
    edges = np.arange(0.0, cut_out + bin_width / 2, bin_width)
    n_bins = len(edges) - 1
    probe = PowerCurveModel(edges, np.zeros(n_bins), np.zeros(n_bins), np.zeros(n_bins, int), float(nominal), min_bin_samples)
    idx = probe.bin_index(wind)
    median, _, counts = _bin_stats(idx, power, n_bins)
    curve = PowerCurveModel(edges, median, np.zeros(n_bins), counts, float(nominal), min_bin_samples)
    reference = curve.expected_power(wind)
    _, spread, _ = _bin_stats(idx, power, n_bins, reference)
    spread = np.where(counts > 0, np.maximum(spread, 0.0), np.nan)
    return PowerCurveModel(edges, median, spread, counts, float(nominal), min_bin_samples)


def filter_power_curve_outliers(matrix: SampleMatrix, curve: PowerCurveModel, wind_tag: str, power_tag: str, band=4.0):
    """Inlier mask over rows of ``matrix``.

    Curtailment (power < 1% nominal with wind > 4 m/s) is always an outlier;
    rows in unusable bins are kept. Rows with invalid wind/power are kept
    here and dropped by the component projection.
    """
    wind = matrix.column(wind_tag)
    power = matrix.column(power_tag)
    return power_curve_inliers(wind, power, curve, band)


def power_curve_inliers(wind, power, curve: PowerCurveModel, band=4.0, min_spread_fraction=0.005) -> np.ndarray:
    wind = np.asarray(wind, dtype=float)
    power = np.asarray(power, dtype=float)
    finite = np.isfinite(wind) & np.isfinite(power)
    idx = curve.bin_index(np.where(finite, wind, -1.0))
    usable_row = (idx >= 0) & curve.usable[np.maximum(idx, 0)] & finite
    expected = curve.expected_power(np.where(finite, wind, 0.0))
    # idle bins have near-zero MAD; floor it so sensor noise is not an outlier
    spread = np.maximum(curve.spread[np.maximum(idx, 0)], min_spread_fraction * curve.nominal_power)
    with np.errstate(invalid="ignore"):
        deviant = usable_row & (np.abs(power - expected) > band * spread)
        curtailed = finite & (power < 0.01 * curve.nominal_power) & (wind > 4.0)
    return ~(deviant | curtailed)


# ---------------------------------------------------------- seasonal adjustment


@dataclass(frozen=True)
class SeasonalModel:
    ambient_tag: str
    tags: tuple[str, ...]
    intercept: np.ndarray
    slope: np.ndarray
    reference_ambient: float
    low_load_threshold: float


def fit_seasonal_model(matrix: SampleMatrix, spec: ComponentSpec, nominal, low_load_threshold=0.2, *,
                       ambient_tag: str, power_tag: str, min_rows: int = 50) -> SeasonalModel:
    """OLS of each component temperature on ambient temperature over low-load rows."""
    ambient = matrix.column(ambient_tag)
    power = matrix.column(power_tag)
    temp_names = tuple(t.name for t in spec.temperature_tags)
    temps = np.column_stack([matrix.column(n) for n in temp_names])
    rows_ok = np.isfinite(ambient) & np.isfinite(power) & np.isfinite(temps).all(axis=1)
    low = rows_ok & (power < low_load_threshold * nominal)
    if low.sum() < min_rows:
        raise DataError(f"seasonal fit needs at least {min_rows} low-load rows, got {int(low.sum())}")
    x = ambient[low]
    xc = x - x.mean()
    sxx = xc @ xc
    if not sxx > 1e-12 * len(x):
        raise DataError("seasonal fit: ambient temperature has zero variance over low-load rows")
    y = temps[low]
    slope = xc @ (y - y.mean(axis=0)) / sxx
    intercept = y.mean(axis=0) - slope * x.mean()
    reference = float(np.mean(ambient[np.isfinite(ambient)]))
    return SeasonalModel(ambient_tag, temp_names, intercept, slope, reference, float(low_load_threshold))


def apply_seasonal_adjustment(matrix: SampleMatrix, model: SeasonalModel) -> SampleMatrix:
    """adjusted = temp - slope * (ambient - reference_ambient); other columns untouched."""
    values = np.array(matrix.values)
    shift = matrix.column(model.ambient_tag) - model.reference_ambient
    for name, b in zip(model.tags, model.slope):
        j = matrix.column_index(name)
        values[:, j] = values[:, j] - b * shift
    valid = matrix.valid.copy()
    amb_ok = matrix.valid[:, matrix.column_index(model.ambient_tag)]
    for name in model.tags:
        valid[:, matrix.column_index(name)] &= amb_ok
    return SampleMatrix(matrix.timestamps, matrix.columns, values, valid, matrix.interpolated)


# --------------------------------------------------------------- standardizer


@dataclass(frozen=True)
class Standardizer:
    columns: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return z * self.std + self.mean


def fit_standardizer(matrix: SampleMatrix) -> Standardizer:
    x = matrix.values
    if matrix.n_rows < 2:
        raise DataError("standardizer needs at least 2 rows")
    if not matrix.valid.all():
        raise DataError("standardizer requires a fully valid matrix")
    mean = x.mean(axis=0)
    std = x.std(axis=0, ddof=1)
    for name, s, col in zip(matrix.columns, std, x.T):
        if not s > 0 or np.ptp(col) == 0:
            raise DataError(f"column {name!r} is constant over the training set")
    return Standardizer(matrix.columns, mean, std)


def apply_standardizer(matrix: SampleMatrix, s: Standardizer) -> SampleMatrix:
    if matrix.columns != s.columns:
        raise DataError(f"standardizer columns {s.columns} do not match matrix columns {matrix.columns}")
    return matrix.with_values(s.transform(matrix.values))


def invert_standardizer(matrix: SampleMatrix, s: Standardizer) -> SampleMatrix:
    return matrix.with_values(s.inverse(matrix.values))


# ------------------------------------------------------------------------ MOR


@dataclass(frozen=True)
class MorModel:
    centroids: np.ndarray
    counts: np.ndarray
    thresholds: np.ndarray
    min_cluster_fraction: float
    c: float
    inertia_history: tuple[float, ...] = ()

    @property
    def k(self) -> int:
        return len(self.centroids)

    @property
    def fractions(self) -> np.ndarray:
        return self.counts / self.counts.sum()


def _sq_dist(x, centroids):
    # ||x||^2 - 2 x.c + ||c||^2, clipped against cancellation
    d = (x * x).sum(1)[:, None] - 2.0 * x @ centroids.T + (centroids * centroids).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _seed_centroids(x, k, rng):
    """k-means++ D^2 seeding."""
    n = len(x)
    centroids = [x[rng.integers(n)]]
    d2 = _sq_dist(x, np.asarray(centroids))[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            i = rng.integers(n)
        else:
            i = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            i = min(i, n - 1)
        centroids.append(x[i])
        d2 = np.minimum(d2, _sq_dist(x, x[i:i + 1])[:, 0])
    return np.array(centroids)


def kmeans(x: np.ndarray, k: int, seed=0, max_iter=300, max_reseeds=5):
    """Lloyd iterations from k-means++ seeds, stopping when no assignment changes.

    Returns (centroids, labels, inertia_history).
    """
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng(seed)
    centroids = _seed_centroids(x, k, rng)
    labels = None
    history = []
    reseeds = 0
    for _ in range(max_iter):
        d2 = _sq_dist(x, centroids)
        new_labels = d2.argmin(axis=1)
        history.append(float(d2[np.arange(len(x)), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(counts == 0)
        if len(empty):
            if reseeds >= max_reseeds:
                raise ClusteringError(f"k-means: empty cluster persists after {max_reseeds} re-seeds")
            reseeds += 1
            own = d2[np.arange(len(x)), labels]
            for j in empty:
                far = int(own.argmax())
                centroids[j] = x[far]
                own[far] = -1.0
            labels = None
            continue
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, x)
        centroids = sums / counts[:, None]
    counts = np.bincount(labels, minlength=k)
    if (counts == 0).any():
        raise ClusteringError("k-means: empty cluster after convergence")
    return centroids, labels, history


def mor_fit(matrix: SampleMatrix, k: int = 8, seed=0, *, c: float = 3.0, min_cluster_fraction: float = 0.02) -> MorModel:
    x = matrix.values
    if k < 1:
        raise ClusteringError("k must be >= 1")
    if len(x) < 10 * k:
        raise ClusteringError(f"MOR needs at least {10 * k} rows for k={k}, got {len(x)}")
    centroids, labels, history = kmeans(x, k, seed)
    dist = np.sqrt(_sq_dist(x, centroids)[np.arange(len(x)), labels])
    counts = np.bincount(labels, minlength=k)
    thresholds = np.empty(k)
    for j in range(k):
        dj = dist[labels == j]
        thresholds[j] = dj.mean() + c * dj.std()
    thresholds = np.maximum(thresholds, 1e-9)
    return MorModel(centroids, counts, thresholds, float(min_cluster_fraction), float(c), tuple(history))


def mor_filter(matrix: SampleMatrix, model: MorModel) -> np.ndarray:
    """Inlier mask: nearest cluster must be large enough and the row within its distance threshold."""
    x = matrix.values if isinstance(matrix, SampleMatrix) else np.asarray(matrix, dtype=float)
    if x.shape[1] != model.centroids.shape[1]:
        raise DataError(f"MOR model has dimension {model.centroids.shape[1]}, matrix has {x.shape[1]}")
    d2 = _sq_dist(x, model.centroids)
    nearest = d2.argmin(axis=1)
    dist = np.sqrt(d2[np.arange(len(x)), nearest])
    small = model.fractions[nearest] < model.min_cluster_fraction
    far = dist > model.thresholds[nearest]
    return ~(small | far)
