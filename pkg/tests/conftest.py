import json
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def bundle_dir() -> Path:
    return FIXTURES / "bundle"


@pytest.fixture(scope="session")
def co_panel_path() -> Path:
    return FIXTURES / "co_panel.json"


@pytest.fixture(scope="session")
def co_panel_doc() -> dict:
    return json.loads((FIXTURES / "co_panel.json").read_text("utf-8"))


class StepClock:
    """Deterministic clock: starts at `start`, advances `step` per call."""

    def __init__(self, start: int = 1_000_000, step: int = 1000):
        self.now = start
        self.step = step

    def __call__(self) -> int:
        value = self.now
        self.now += self.step
        return value

    def jump(self, delta: int) -> None:
        self.now += delta


@pytest.fixture
def step_clock() -> StepClock:
    return StepClock()
