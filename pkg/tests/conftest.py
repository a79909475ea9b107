# tests/conftest.py

import json
import math
from pathlib import Path
from typing import Any, Dict, List

import pytest

from services.coder.budgets import load_covol_envelope
from services.lattice.lattice_types import ToleranceConfig
from services.weyl.weyl_types import DiagonalFlow

ROOT = Path(__file__).resolve().parents[1]
EVALUATION = ROOT / "evaluation"


@pytest.fixture(scope="session")
def fixture_flows() -> List[Dict[str, Any]]:
    with open(EVALUATION / "flows.json", "r", encoding="utf-8") as f:
        return json.load(f)["flows"]


@pytest.fixture(scope="session")
def pinned_constants() -> Dict[str, float]:
    with open(EVALUATION / "pinned_constants.json", "r", encoding="utf-8") as f:
        return {k: float(v) for k, v in json.load(f)["budgets"].items()}


@pytest.fixture(scope="session")
def covol_envelope() -> float:
    return load_covol_envelope(EVALUATION / "pinned_constants.json")


@pytest.fixture
def flow2() -> DiagonalFlow:
    return DiagonalFlow.of(["1/2", "-1/2"])


@pytest.fixture
def flow3() -> DiagonalFlow:
    return DiagonalFlow.of(["1/2", "1/2", "-1"])


@pytest.fixture
def z2_tolerance() -> ToleranceConfig:
    """delta = e^-16, delta' = e^-7, r = 0.9: the Z^2 trajectory example."""
    return ToleranceConfig(delta=math.exp(-16), delta_prime=math.exp(-7), r=0.9)

