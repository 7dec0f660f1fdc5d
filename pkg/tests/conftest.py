import sys
from pathlib import Path

import pytest

from conedflow.harness import Context, load_config

HERE = Path(__file__).parent
CONFIGS = HERE.parent / "configs"
sys.path.insert(0, str(HERE))


def context(name: str, **changes) -> Context:
    cfg = load_config(CONFIGS / name)
    for k, v in changes.items():
        setattr(cfg, k, v)
    return Context(cfg)


@pytest.fixture(scope="session")
def z2z3_ctx():
    """Z/2 * Z/3 relative to both factors, radius 6."""
    return context("z2z3.yaml")


@pytest.fixture(scope="session")
def f2_small_ctx():
    """F2 relative to <a>, radius 3: small enough for exhaustive checks."""
    return context("f2_rel_a.yaml", radius=3, coset_depth=4)


VERDICTS: dict = {}


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[k])
