import numpy as np
import pytest

from trace_forge.synthetic import synthetic_scene


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def scene():
    """A 128x128 synthetic reference shared by many tests."""
    return synthetic_scene(np.random.default_rng(77), size=(128, 128))


@pytest.fixture(scope="session")
def textured():
    """Smooth-plus-grain RGB texture, values well inside (0, 255)."""
    r = np.random.default_rng(5)
    base = np.cumsum(np.cumsum(r.standard_normal((96, 96, 3)), 0), 1)
    base = (base - base.min()) / (base.max() - base.min())
    return 40 + 170 * base + 8 * r.standard_normal((96, 96, 3))


# --- acceptance reporting ----------------------------------------------------

def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def report(request):
    """Record one PASS/FAIL line for an acceptance criterion and return the verdict."""
    lines = request.config._acceptance_lines

    def _report(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
