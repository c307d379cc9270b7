import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("thorough", max_examples=400, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def record():
    """Log one acceptance line: record(label, passed, detail)."""

    def _record(label: str, passed: bool, detail: str = "") -> None:
        _ACCEPTANCE.append((label, bool(passed), detail))

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in sorted(_ACCEPTANCE, key=lambda x: _order(x[0])):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}")


def _order(label: str):
    head = label.split()[0].rstrip(".:")
    try:
        return (int(head.strip("C")), label)
    except ValueError:
        return (99, label)
