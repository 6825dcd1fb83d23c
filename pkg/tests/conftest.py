import pytest

_VERDICTS: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def verdict():
    """Record a named pass/fail line for the terminal summary, then assert it."""

    def record(name: str, ok: bool, detail: str = ""):
        _VERDICTS[name] = (bool(ok), detail)
        assert ok, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance")
    for name in sorted(_VERDICTS, key=lambda s: (len(s.split()[0]), s)):
        ok, detail = _VERDICTS[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
