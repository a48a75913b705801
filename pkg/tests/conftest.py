import numpy as np
import pytest

from cfbench.phantoms import render_phantom, sample_subject


@pytest.fixture(scope="session")
def phantom_a():
    spec = sample_subject("A", 7)
    vol, labels = render_phantom(spec)
    return spec, vol, labels


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for an acceptance criterion and print it immediately."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(number: int, name: str, ok: bool, detail: str = "") -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name}" + (
            f" ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
