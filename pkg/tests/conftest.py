import pytest

_LINES = []


@pytest.fixture(scope="session")
def acceptance_report(request):
    """Callable ``report(n, passed, detail)`` printing one line per criterion."""
    tr = request.config.pluginmanager.get_plugin("terminalreporter")

    def report(n, passed, detail):
        line = f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}"
        _LINES.append(line)
        if tr is not None:
            tr.write_line("")
            tr.write_line(line)
        else:
            print(line)
    return report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
