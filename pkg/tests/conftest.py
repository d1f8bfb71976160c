import copy

import numpy as np
import pandas as pd
import pytest

from wtsentinel.domain import validate_farm_config

TAGS = [
    {"name": "wind_speed", "role": "wind_speed"},
    {"name": "active_power", "role": "active_power"},
    {"name": "rotor_speed", "role": "rotor_speed"},
    {"name": "ambient_temp", "role": "ambient_temperature"},
    {"name": "gearbox_oil_temp", "role": "component_temperature"},
    {"name": "gearbox_bearing_temp", "role": "component_temperature"},
]
GEARBOX = {"kind": "gearbox", "tags": ["active_power", "rotor_speed", "gearbox_oil_temp", "gearbox_bearing_temp"]}


def minimal_document(**overrides):
    doc = {
        "farm_id": "WF-T",
        "healthy_periods": [["2015-01-01T00:00:00Z", "2016-01-01T00:00:00Z"]],
        "tags": copy.deepcopy(TAGS),
        "turbines": [{"turbine_id": "WT01", "nominal_power_kw": 2000, "components": [copy.deepcopy(GEARBOX)]}],
    }
    doc.update(overrides)
    return doc


@pytest.fixture
def farm_doc():
    return minimal_document()


@pytest.fixture
def farm_config():
    return validate_farm_config(minimal_document())


def grid(n, start="2020-01-01", freq="10min"):
    return pd.date_range(start, periods=n, freq=freq, tz="UTC")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def gearbox_run():
    """One synthetic turbine, gearbox only: a year of training data plus 40 held-out healthy days."""
    from wtsentinel.ingestion import regularize
    from wtsentinel.pipeline import train_component
    from wtsentinel.synth import Scenario, SynthSettings, demo_config_document, simulate

    config = validate_farm_config(demo_config_document(1, components=["gearbox"], healthy_days=365))
    scenario = Scenario(SynthSettings(duration_days=405, seed=11))
    table, labels = simulate(config, scenario)
    matrix = regularize(table, config)["WT01"]
    turbine = config.turbines[0]
    artifact, report = train_component(config, turbine, turbine.components[0], matrix)
    held_out = matrix.rows(matrix.timestamps >= config.healthy_periods[0][1])
    return {"config": config, "table": table, "labels": labels, "matrix": matrix,
            "artifact": artifact, "report": report, "held_out": held_out}


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
