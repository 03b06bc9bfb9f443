import functools

import pytest

from ullersma.config import reference_config
from ullersma.model import build_model

_ACCEPTANCE_LINES = []

DISCRETE_CONFIGS = ("vacuum", "homogeneous_n0", "homogeneous_n3", "two_layer_n2")


@functools.lru_cache(maxsize=None)
def ref_model(name):
    return build_model(reference_config(name))


@functools.lru_cache(maxsize=None)
def ref_modes(name):
    from ullersma.verify import mode_source
    return mode_source(ref_model(name))


@pytest.fixture
def record():
    """Collects one summary line per acceptance criterion."""
    def _record(label, ok, detail):
        _ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
