import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_VERDICTS = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    """Store the verdict of one acceptance criterion for the terminal summary."""
    _VERDICTS[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_VERDICTS):
        ok, detail = _VERDICTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
