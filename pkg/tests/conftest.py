import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from switchflow.expr import parse_field  # noqa: E402
from switchflow.flow import Manifold  # noqa: E402
from switchflow.pdmp import SwitchingSystem  # noqa: E402

CONFIG_DIR = Path(__file__).resolve().parents[1] / "src" / "switchflow" / "configs"


def torus_basis(n: int):
    rows = []
    for i in range(n):
        rows.append("; ".join("1" if j == i else "0" for j in range(n)))
    return [parse_field(r, n) for r in rows]


@pytest.fixture
def torus2():
    return SwitchingSystem.uniform(Manifold.torus(2), torus_basis(2))


@pytest.fixture
def config_dir():
    return CONFIG_DIR


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.format_line(k))
