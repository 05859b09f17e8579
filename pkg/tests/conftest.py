import pytest

from paprlab.config import derive_layout, make_spec

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def record_criterion():
    """Record one acceptance line; printed in the terminal summary."""

    def _record(name: str, passed: bool, detail: str = "") -> None:
        _ACCEPTANCE.append((name, bool(passed), detail))
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


@pytest.fixture(scope="session")
def two_band_layout():
    """N=(600,300), f2=2f1, guard 20 f1, CP 7 %, 16-QAM, J=8."""
    return derive_layout(make_spec([600, 300], [1, 2]))


@pytest.fixture(scope="session")
def small_layout():
    """N=(200,100), f2=2f1, guard 20 f1."""
    return derive_layout(make_spec([200, 100], [1, 2]))
