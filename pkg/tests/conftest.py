import pytest


@pytest.fixture
def report(request):
    """Write one 'criterion N [PASS|FAIL] ...' line to the terminal, bypassing capture."""
    tr = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(number, title, ok, detail=""):
        line = f"criterion {number:>2} [{'PASS' if ok else 'FAIL'}] {title}"
        if detail:
            line += f": {detail}"
        if tr is not None:
            tr.write_line("")
            tr.write_line(line)
        else:
            print(line)
        return ok

    return emit
