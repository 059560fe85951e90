import pytest

_CRITERIA: dict[int, list[tuple[bool, str]]] = {}


class CriterionLog:
    """Collects named sub-checks for one acceptance criterion."""

    def __init__(self, number: int):
        self.number = number
        self.checks = _CRITERIA.setdefault(number, [])

    def check(self, ok: bool, detail: str) -> bool:
        self.checks.append((bool(ok), detail))
        return bool(ok)

    def failures(self) -> list[str]:
        return [d for ok, d in self.checks if not ok]


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    return CriterionLog(marker.args[0])


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        checks = _CRITERIA[n]
        ok = all(c for c, _ in checks)
        tr.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}")
        for c, detail in checks:
            tr.write_line(f"    [{'ok' if c else 'FAIL'}] {detail}")
