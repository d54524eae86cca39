import numpy as np
import pytest

from regtrace.galerkin import GalerkinSystem, build_system
from regtrace.model import validate_scenario

REFERENCE_TERMS = {
    0: [[0.2, 0.05], [0.05, -0.1]],
    1: [[0.3, 0.1], [0.1, 0.2]],
    2: [[0.1, -0.05], [-0.05, 0.1]],
    3: [[-0.1, 0.05], [0.05, 0.15]],
}


def make_model(r=1, a=1.0, alpha=3.0, T=2, K=16, terms=None, m=None):
    raw = {"model": {"r": r, "a": a, "alpha": alpha, "T": T, "K": K}, "potential": terms or {}}
    if m is not None:
        raw["run"] = {"m": m}
    return validate_scenario(raw)


def reference_model(K=512, **kw):
    return make_model(K=K, terms=REFERENCE_TERMS, **kw)


def two_level():
    """mu = {1, 2} coupled by 0.5."""
    return GalerkinSystem.from_arrays([1.0, 2.0], [[0.0, 0.5], [0.5, 0.0]])


@pytest.fixture
def small_reference():
    return build_system(reference_model(K=12))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# criterion number -> (title, passed, detail), filled by the acceptance suite
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  criterion {number:>2}: {title}  {detail}")
