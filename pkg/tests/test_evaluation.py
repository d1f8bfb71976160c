import pandas as pd
import pytest

from wtsentinel.errors import DataError
from wtsentinel.evaluation import evaluate
from wtsentinel.monitor import WarningEvent
from wtsentinel.records import read_warning_log, write_warning_log
from wtsentinel.synth import FaultSpec, label_ground_truth

START = pd.Timestamp("2015-01-01T00:00Z")
DAY = pd.Timedelta(days=1)


def _labels():
    fault = FaultSpec("WT01", "gearbox", START + 300 * DAY, START + 330 * DAY + 32 * DAY, outage_days=30)
    return label_ground_truth([fault], START, START + 400 * DAY, [("WT01", "gearbox"), ("WT02", "gearbox")])


def _ev(day, old, new, turbine="WT01"):
    return WarningEvent(START + day * DAY, turbine, "gearbox", old, new, 0.8, "WF1")


def test_lead_time_subtraction():
    failure_day = 362
    report = evaluate([_ev(failure_day - 62, 0, 1), _ev(failure_day - 30, 1, 3)], _labels())
    (f,) = report.faults
    assert f.detected and f.lead_time == pd.Timedelta(days=62) and f.max_level == 3
    assert report.detection_rate == 1.0
    assert report.to_dict()["faults"][0]["lead_time_days"] == 62.0


def test_no_events_no_detection():
    report = evaluate([], _labels())
    assert report.detection_rate == 0.0
    assert report.faults[0].lead_time is None
    assert report.false_positive_events == 0


def test_false_positives_and_exposure():
    events = [_ev(10, 0, 1, "WT02"), _ev(10.5, 1, 0, "WT02"), _ev(100, 0, 2), _ev(399, 0, 1, "WT02")]
    report = evaluate(events, _labels())
    assert report.false_positive_events == 3
    expected_years = (300 + 8 + 400) * DAY / pd.Timedelta(days=365.25)
    assert report.healthy_turbine_years == pytest.approx(expected_years)
    assert report.false_positive_rate == pytest.approx(3 / expected_years)
    assert report.faults[0].detected is False


def test_events_in_outage_ignored():
    report = evaluate([_ev(370, 0, 1)], _labels())
    assert report.false_positive_events == 0 and not report.faults[0].detected


def test_report_formats():
    report = evaluate([_ev(330, 0, 1)], _labels())
    text = report.to_text()
    assert "lead time 32.0 days" in text and "detection rate: 1.000" in text
    import json
    doc = json.loads(report.to_json())
    assert doc["detection_rate"] == 1.0 and doc["false_positive_events"] == 0


def test_warning_log_round_trip(tmp_path):
    events = [_ev(3, 0, 1), _ev(4.25, 1, 3)]
    write_warning_log(events, tmp_path / "w.csv")
    assert read_warning_log(tmp_path / "w.csv") == events
    write_warning_log([], tmp_path / "empty.csv")
    assert read_warning_log(tmp_path / "empty.csv") == []


@pytest.mark.parametrize("body", [
    "",
    "timestamp,turbine_id\n",
    "timestamp,farm_id,turbine_id,component,old_level,new_level,kpi\nnot-a-time,WF1,WT01,gearbox,0,1,0.9\n",
    "timestamp,farm_id,turbine_id,component,old_level,new_level,kpi\n2015-01-01T00:00:00Z,WF1,WT01,gearbox,zero,1,0.9\n",
])
def test_unparseable_warning_logs(tmp_path, body):
    path = tmp_path / "w.csv"
    path.write_text(body)
    with pytest.raises(DataError):
        read_warning_log(path)
