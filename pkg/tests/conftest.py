import json
import re
import sys
from pathlib import Path

import pytest

PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from donor_sim import create_app
from donor_sim.schemas import ChargeState, DeviceParams, Mechanism
from donor_sim.services.spectroscopy import transitions_for
from golden_cases import GOLDEN_DIR

GOLDEN_RTOL = 1e-7
GOLDEN_ATOL = 1e-9
_CELL = re.compile(r",| = ")


@pytest.fixture()
def app(monkeypatch):
    monkeypatch.delenv("DONOR_PARAMS", raising=False)
    app = create_app("testing")
    app.config.update(DEVICE_PARAMS="config/device_defaults.cfg")
    yield app


@pytest.fixture()
def runner(app):
    return app.test_cli_runner()


@pytest.fixture()
def params():
    return DeviceParams()


@pytest.fixture()
def nmr_plus_lines(params):
    return {line.upper_m: line for line in transitions_for(params, Mechanism.NMR, ChargeState.IONISED)}


def _number(token):
    try:
        return float(token)
    except ValueError:
        return None


def _same_number(actual, expected):
    return actual == pytest.approx(expected, rel=GOLDEN_RTOL, abs=GOLDEN_ATOL, nan_ok=True)


def _same_document(actual, expected, where):
    if isinstance(expected, dict):
        assert isinstance(actual, dict) and sorted(actual) == sorted(expected), where
        for key, value in expected.items():
            _same_document(actual[key], value, f"{where}.{key}")
    elif isinstance(expected, list):
        assert isinstance(actual, list) and len(actual) == len(expected), where
        for index, (left, right) in enumerate(zip(actual, expected)):
            _same_document(left, right, f"{where}[{index}]")
    elif isinstance(expected, (int, float)) and not isinstance(expected, bool):
        assert isinstance(actual, (int, float)) and not isinstance(actual, bool), where
        assert _same_number(actual, expected), f"{where}: {actual!r} != {expected!r}"
    else:
        assert actual == expected, where


def _same_table(actual, expected, name):
    actual_lines, expected_lines = actual.splitlines(), expected.splitlines()
    assert len(actual_lines) == len(expected_lines), name
    for number, (left, right) in enumerate(zip(actual_lines, expected_lines), start=1):
        left_cells, right_cells = _CELL.split(left), _CELL.split(right)
        assert len(left_cells) == len(right_cells), f"{name}:{number}: {left!r}"
        for cell, wanted in zip(left_cells, right_cells):
            value, target = _number(cell), _number(wanted)
            if target is None:
                assert cell == wanted, f"{name}:{number}: {left!r}"
            else:
                assert value is not None and _same_number(value, target), f"{name}:{number}: {left!r}"


@pytest.fixture()
def golden():
    """Compare output with tests/golden/<name>: text exactly, numbers to GOLDEN_RTOL."""

    def check(name: str, text: str) -> None:
        path = GOLDEN_DIR / name
        if not path.exists():
            pytest.fail(f"golden file tests/golden/{name} is missing; regenerate with scripts/generate_golden.py")
        expected = path.read_text(encoding="utf-8")
        if path.suffix == ".json":
            _same_document(json.loads(text), json.loads(expected), name)
        else:
            _same_table(text, expected, name)

    return check
