import numpy as np
import pytest

from equifair import make_synthetic

_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one acceptance line; the terminal summary prints them all."""

    def record(criterion, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split("criterion ")[1].split(":")[0].split(".")[0])):
        terminalreporter.write_line(line)


# example listing shared by several modules: 10 audited scores and the
# 8-row calibration subset with two query points
LISTING_SCORES = np.array([0.05, 0.08, 0.9, 0.5, 0.18, 0.92, 0.9, 0.5, 0.16, 0.79])
LISTING_ORIGIN = [1, 0, 0, 1, 1, 1, 0, 0, 0, 1]
LISTING_GENDER = [1, 1, 1, 0, 0, 1, 0, 0, 0, 1]


@pytest.fixture
def listing():
    return {
        "scores": LISTING_SCORES.copy(),
        "sensitive": {"origin": list(LISTING_ORIGIN), "gender": list(LISTING_GENDER)},
        "calib_scores": LISTING_SCORES[:8].copy(),
        "calib_origin": LISTING_ORIGIN[:8],
        "calib_gender": LISTING_GENDER[:8],
        "query": np.array([0.16, 0.79]),
        "query_origin": [0, 1],
        "query_gender": [0, 1],
    }


@pytest.fixture(scope="session")
def synthetic_split():
    """20k calibration + 20k test rows with two correlated binary attributes."""
    data = make_synthetic(40_000, seed=0)
    return data.split(20_000)


@pytest.fixture(scope="session")
def small_split():
    data = make_synthetic(4_000, seed=3)
    return data.split(2_000)
