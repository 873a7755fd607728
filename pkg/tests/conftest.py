import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def unit_torus():
    from metriclab import FlatTorus

    return FlatTorus(2, 1.0)


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture()
def record():
    """Store the pass/fail line for one acceptance criterion."""

    def _record(number: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
