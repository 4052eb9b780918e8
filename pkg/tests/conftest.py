import numpy as np
import pytest

from stratcr.model import EncounterData, ModelSpec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_data():
    """Three captured individuals in two strata over two occasions."""
    return EncounterData(strata=[0, 1, 1], K=2, S=2, histories=[[1, 1], [0, 1], [1, 0]])


@pytest.fixture
def derived_spec():
    return ModelSpec(design=[[1.0, 0.0], [1.0, 1.0]], M=8, constraint="derived",
                     design_names=["one", "x"])


@pytest.fixture
def example_frequency_csv(tmp_path):
    """The worked ten-individual example: frequencies and groups over K=5 occasions."""
    y = [1, 1, 3, 1, 1, 2, 2, 4, 1, 1]
    g = [1, 1, 1, 2, 3, 3, 3, 3, 4, 4]
    path = tmp_path / "example.csv"
    lines = ["id,stratum,y"] + [f"{i + 1},{gi},{yi}" for i, (yi, gi) in enumerate(zip(y, g))]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def acceptance_log():
    """Record one pass/fail line per acceptance criterion for the terminal summary."""

    def record(number: int, passed: bool, detail: str):
        _ACCEPTANCE[number] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    reports = [r for key in ("passed", "failed") for r in terminalreporter.stats.get(key, [])
               if getattr(r, "when", "call") == "call"]
    unit = [r for r in reports if "test_acceptance" not in r.nodeid]
    if unit and "test_acceptance" in " ".join(r.nodeid for r in reports):
        failed = sum(r.failed for r in unit)
        _ACCEPTANCE[8] = (failed == 0, f"unit suites: {len(unit) - failed} passed, {failed} failed")
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
