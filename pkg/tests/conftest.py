import pytest

from cspwb.agespec import builtin_linear_order
from cspwb.construct import build_pcsp
from cspwb.library import chain


@pytest.fixture(scope="session")
def demo():
    """The linear-order template pair built from the 3-chain."""
    return build_pcsp(builtin_linear_order(), ["<"], chain(3))


@pytest.fixture
def criterion_log(request):
    """Collects PASS/FAIL lines; they are repeated in the terminal summary."""
    if not hasattr(request.config, "_criterion_lines"):
        request.config._criterion_lines = {}
    return request.config._criterion_lines


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_criterion_lines", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines, key=int):
            terminalreporter.write_line(lines[key])
