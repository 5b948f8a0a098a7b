from datetime import date

import numpy as np
import pytest

from siteclust.ingest import Checklist


def make_checklist(i, lat=44.0, lon=-123.0, **kw):
    defaults = dict(
        id=f"c{i}",
        latitude=lat,
        longitude=lon,
        observer_id="obs1",
        date=date(2017, 6, 1),
        effort_distance_km=0.1,
        is_hotspot=False,
        detection_features=(160.0, 7.5, 30.0, 0.1, 1.0),
        occupancy_features=(100.0, 0.2, 0.1, -0.1, 0.5),
        detections={"AMRO": 0},
    )
    defaults.update(kw)
    return Checklist(**defaults)


@pytest.fixture
def checklist():
    return make_checklist


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, shown after the run
ACCEPTANCE: list[tuple[str, str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in sorted(ACCEPTANCE, key=lambda r: int(r[0].split()[1])):
        terminalreporter.write_line(f"{status:7s} {name}: {detail}")
