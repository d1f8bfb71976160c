import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import grid
from wtsentinel.domain import SampleMatrix
from wtsentinel.errors import DataError, SchemaMismatchError, SingularCovarianceError
from wtsentinel.monitor import (
    ChartModel,
    KpiState,
    WarningState,
    chi_square_cdf,
    chi_square_quantile,
    classify_region,
    fit_residual_chart,
    kpi_from_fractions,
    kpi_update,
    monitor_stream,
    t2_score,
    t2_scores,
    update_warning_state,
)

# ------------------------------------------------------------- chi-square


@pytest.mark.parametrize("dof,alpha,expected", [(2, 0.95, 5.9915), (1, 0.5, 0.4549), (4, 0.99, 13.2767)])
def test_chi_square_table_values(dof, alpha, expected):
    assert abs(chi_square_quantile(dof, alpha) - expected) < 1e-3


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.5])
def test_chi_square_alpha_domain(alpha):
    with pytest.raises(ValueError):
        chi_square_quantile(3, alpha)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 60), st.floats(1e-4, 1 - 1e-4))
def test_chi_square_inverts_cdf(dof, alpha):
    q = chi_square_quantile(dof, alpha)
    assert abs(chi_square_cdf(q, dof) - alpha) < 1e-10


# ------------------------------------------------------------------ chart


def test_null_chart_estimates():
    r = np.random.default_rng(0).normal(size=(50_000, 3))
    chart = fit_residual_chart(r)
    assert np.abs(chart.mean).max() < 0.02
    assert np.abs(np.diag(chart.inv_cov) - 1).max() < 0.05
    assert np.abs(chart.inv_cov - chart.inv_cov.T).max() < 1e-9
    assert 0 < chart.boundaries[0] < chart.boundaries[1]
    assert abs(sum(chart.expected) - 1) < 1e-15


def test_collinear_columns_named():
    x = np.random.default_rng(1).normal(size=(500, 2))
    r = SampleMatrix.from_arrays(grid(500), ("a", "b", "b_copy"), np.column_stack([x, x[:, 1]]))
    with pytest.raises(SingularCovarianceError, match="'b' and 'b_copy'"):
        fit_residual_chart(r, ridge=0.0)


def test_chart_needs_rows():
    with pytest.raises(DataError):
        fit_residual_chart(np.zeros((19, 2)))


def test_p2_boundary():
    chart = fit_residual_chart(np.random.default_rng(2).normal(size=(1000, 2)))
    assert abs(chart.boundaries[0] - 5.9915) < 1e-3


def _identity_chart(p=2):
    return ChartModel(np.zeros(p), np.eye(p), (chi_square_quantile(p, 0.95), chi_square_quantile(p, 0.99)))


def test_t2_values():
    chart = _identity_chart()
    assert t2_score(chart, [0.0, 0.0]) == 0
    assert t2_score(chart, [3.0, 4.0]) == 25.0
    with pytest.raises(DataError):
        t2_score(chart, [1.0, 2.0, 3.0])


def test_t2_zero_only_at_mean():
    r = np.random.default_rng(3).normal(size=(500, 3))
    chart = fit_residual_chart(r)
    assert t2_score(chart, chart.mean) == 0
    assert (t2_scores(chart, r[:50]) > 0).all()


def test_null_tail_fraction():
    rng = np.random.default_rng(4)
    chart = fit_residual_chart(rng.normal(size=(50_000, 4)))
    t2 = t2_scores(chart, rng.normal(size=(100_000, 4)))
    assert abs(np.mean(t2 > chart.boundaries[1]) - 0.01) < 0.003


def test_regions_and_tie_break():
    chart = _identity_chart()
    q1, q2 = chart.boundaries
    assert classify_region(0.0, chart) == 1
    assert classify_region(q1, chart) == 1
    assert classify_region(np.nextafter(q1, np.inf), chart) == 2
    assert classify_region(q2, chart) == 2
    assert classify_region(2 * q2, chart) == 3


def test_affine_invariance():
    rng = np.random.default_rng(5)
    r = rng.normal(size=(5000, 3)) @ np.array([[1, 0.3, 0], [0, 1, 0.5], [0, 0, 1.0]])
    probe = rng.normal(size=(200, 3))
    a = np.array([[2.0, 0, 0], [0, 2, 0], [0, 0, 2]])
    shift = np.array([1.0, -3.0, 0.5])
    base = t2_scores(fit_residual_chart(r), probe)
    scaled = t2_scores(fit_residual_chart(r @ a + shift), probe @ a + shift)
    np.testing.assert_allclose(scaled, base, rtol=1e-6, atol=1e-9)
    # a diagonal ridge only commutes with per-column scaling; general maps need it off
    mixed = a @ np.array([[1, 0.2, 0], [0.1, 1, 0], [0, 0.4, 1.0]])
    plain = t2_scores(fit_residual_chart(r, ridge=0.0), probe)
    np.testing.assert_allclose(t2_scores(fit_residual_chart(r @ mixed, ridge=0.0), probe @ mixed), plain, rtol=1e-6)


# -------------------------------------------------------------------- KPI


def test_kpi_closed_forms():
    assert abs(kpi_from_fractions((0.95, 0.04, 0.01)) - 1) < 1e-12
    assert abs(kpi_from_fractions((0.0, 0.0, 1.0)) - 0.01) < 1e-12
    assert abs(kpi_from_fractions((0.85, 0.05, 0.10)) - 0.90) < 1e-12


def _fill(state, counts):
    out = None
    for region, k in zip((1, 2, 3), counts):
        for _ in range(k):
            state, out = kpi_update(state, region)
    return out


def test_kpi_window_examples():
    assert abs(_fill(KpiState(100), (95, 4, 1)) - 1) < 1e-12
    assert abs(_fill(KpiState(100), (0, 0, 100)) - 0.01) < 1e-12
    assert abs(_fill(KpiState(100), (85, 5, 10)) - 0.90) < 1e-12


def test_kpi_not_ready_and_sliding():
    state = KpiState(window=10, min_window=5)
    outs = [state.update(1) for _ in range(4)]
    assert outs == [None] * 4 and not state.ready
    assert state.update(1) == 0.95
    for _ in range(20):
        state.update(3)
    assert sum(state.counts) == len(state.regions) == 10
    assert state.value == pytest.approx(0.01)
    with pytest.raises(ValueError):
        state.update(4)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=3, max_size=3).filter(lambda c: sum(c) > 0))
def test_kpi_range_and_optimum(counts):
    f = np.array(counts) / sum(counts)
    k = kpi_from_fractions(f)
    assert 0 < k <= 1 + 1e-12
    if k == 1:
        np.testing.assert_allclose(f, (0.95, 0.04, 0.01), atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(1e-4, 0.2), st.permutations([0, 1, 2]))
def test_kpi_decreases_when_mass_moves_away(u, v, delta, order):
    pi = np.array([0.95, 0.04, 0.01])
    f = np.random.default_rng(int(u * 1e6)).dirichlet(np.ones(3))
    i, j = order[0], order[1]
    if not (f[i] <= pi[i] and f[j] >= pi[j]):
        return
    move = min(delta, f[i])
    if move <= 1e-9:
        return
    g = f.copy()
    g[i] -= move
    g[j] += move
    assert kpi_from_fractions(g) < kpi_from_fractions(f)


# --------------------------------------------------------------- warnings


def _feed(state, values):
    return [update_warning_state(state, v)[1] for v in values]


def test_escalation_needs_persistence():
    state = WarningState()
    events = _feed(state, [0.90, 0.90, 0.90])
    assert events[:2] == [None, None]
    assert (events[2].old_level, events[2].new_level) == (0, 1)


def test_single_deep_call_no_event():
    state = WarningState()
    _feed(state, [0.90] * 3)
    assert state.level == 1
    assert _feed(state, [0.70]) == [None]
    events = [e for e in _feed(state, [0.70, 0.70]) if e]
    assert [(e.old_level, e.new_level) for e in events] == [(1, 3)]


def test_recovery_only_to_zero():
    state = WarningState(recovery=144)
    _feed(state, [0.5] * 3)
    assert state.level == 3
    events = _feed(state, [0.80] * 50 + [0.95] * 143)
    assert not any(events) and state.level == 3
    (ev,) = _feed(state, [0.95])
    assert (ev.old_level, ev.new_level) == (3, 0)


def test_not_ready_leaves_state():
    state = WarningState()
    _feed(state, [0.90, 0.90])
    assert _feed(state, [None] * 5) == [None] * 5
    assert _feed(state, [0.90])[0].new_level == 1


@settings(max_examples=100, deadline=None)
@given(st.lists(st.one_of(st.floats(0, 1), st.none()), max_size=400))
def test_level_trajectory_reconstructible(values):
    state = WarningState(recovery=10)
    levels, events = [], []
    for v in values:
        ev = state.update(v)
        if ev is not None:
            assert ev.new_level != ev.old_level
            events.append(ev)
        levels.append(state.level)
    level = 0
    changes = 0
    for lv in levels:
        if lv != level:
            assert events[changes].old_level == level and events[changes].new_level == lv
            changes += 1
            level = lv
    assert changes == len(events)


# ----------------------------------------------------------------- stream


def test_training_data_stays_nominal(gearbox_run):
    art = gearbox_run["artifact"]
    m = gearbox_run["matrix"]
    train = m.rows(m.timestamps < gearbox_run["config"].healthy_periods[0][1])
    result = monitor_stream(art, train)
    assert result.level[-1] == 0
    assert np.mean(result.kpi[result.ready] >= 0.95) >= 0.99
    again = monitor_stream(art, train)
    np.testing.assert_array_equal(result.t2, again.t2)
    np.testing.assert_array_equal(result.kpi, again.kpi)
    assert result.events == again.events


def test_invalid_rows_freeze_window(gearbox_run):
    art = gearbox_run["artifact"]
    held = gearbox_run["held_out"]
    result = monitor_stream(art, held)
    frozen = np.flatnonzero(~result.evaluated[1:]) + 1
    assert len(frozen) > 0
    np.testing.assert_array_equal(result.kpi[frozen], result.kpi[frozen - 1])
    assert np.isnan(result.t2[~result.evaluated]).all()
    assert len(result) == held.n_rows


def test_empty_eval(gearbox_run):
    art = gearbox_run["artifact"]
    cols = art.input_columns
    empty = SampleMatrix(pd.DatetimeIndex([], tz="UTC"), cols, np.empty((0, len(cols))), np.empty((0, len(cols)), bool))
    result = monitor_stream(art, empty)
    assert len(result) == 0 and result.events == []
    assert len(result.kpi_frame()) == 0


def test_schema_mismatch(gearbox_run):
    art = gearbox_run["artifact"]
    held = gearbox_run["held_out"]
    with pytest.raises(SchemaMismatchError, match=art.tag_list[-1]):
        monitor_stream(art, held.project(art.input_columns[:-1], drop_invalid=False))
