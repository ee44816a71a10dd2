import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS: dict[str, list[tuple[str, bool, str]]] = {}


class AcceptanceLog:
    def record(self, criterion: str, clause: str, passed: bool, detail: str = "") -> None:
        _RESULTS.setdefault(criterion, []).append((clause, bool(passed), detail))


@pytest.fixture
def acceptance():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(_RESULTS, key=lambda c: int(c)):
        clauses = _RESULTS[crit]
        ok = all(p for _, p, _ in clauses)
        tr.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}")
        for clause, passed, detail in clauses:
            tr.write_line(f"    [{'pass' if passed else 'FAIL'}] {clause}" + (f"  ({detail})" if detail else ""))
