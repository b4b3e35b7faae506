import json
from pathlib import Path

import pytest

from proxtrace.config import ScenarioConfig

DATA = Path(__file__).parent / "data"
DEMO_CONFIGS = Path(__file__).parent.parent / "demos" / "configs"


def scenario(agents=(), **fields) -> ScenarioConfig:
    """Config with hand-placed agents given as dicts (id is the list position)."""
    doc = {"seed": 0, "duration": 3600, "area": [100, 100], "record_positions": True}
    doc.update(fields)
    if agents:
        doc["agents"] = [{"id": i, **a} for i, a in enumerate(agents)]
        pop = dict(doc.get("population", {}))
        pop.setdefault("count", len(agents))
        pop.setdefault("alpha", 0.0)
        doc["population"] = pop
    return ScenarioConfig.from_dict(doc)


def demo_config(name: str) -> ScenarioConfig:
    return ScenarioConfig.from_dict(json.loads((DEMO_CONFIGS / name).read_text()))


@pytest.fixture
def data_dir():
    return DATA


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
