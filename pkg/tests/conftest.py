import pytest

_LINES: dict[int, str] = {}


class AcceptanceLog:
    def record(self, number: int, title: str, passed: bool, detail: str, soft: bool = False):
        tag = ("PASS" if passed else "FAIL") + (" (soft, non-gating)" if soft else "")
        _LINES[number] = f"[{tag}] criterion {number}: {title}: {detail}"


@pytest.fixture(scope="session")
def acceptance_log():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_LINES):
        terminalreporter.write_line(_LINES[n])
