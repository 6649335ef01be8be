import contextlib

import pytest

_RESULTS: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record PASS or FAIL for an acceptance criterion around a block."""

    @contextlib.contextmanager
    def run(number: int, title: str):
        notes: list[str] = []
        try:
            yield notes
        except BaseException as exc:
            _RESULTS[number] = f"criterion {number} FAIL  {title}: {type(exc).__name__}: {str(exc)[:200]}"
            raise
        detail = f" ({'; '.join(notes)})" if notes else ""
        _RESULTS[number] = f"criterion {number} PASS  {title}{detail}"

    return run


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        terminalreporter.write_line(_RESULTS[number])
