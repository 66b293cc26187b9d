import math
import warnings

import pytest

from solitonlab.pde import SolverConfig
from solitonlab.surfaces import SurfaceKind, construct_piece

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def pitchfork_fine():
    """Pitchfork(pi) piece on [-12, 12] at h = pi/64, caps up to 12."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return construct_piece(SurfaceKind("pitchfork", math.pi), math.pi / 64, SolverConfig())


@pytest.fixture(scope="session")
def pitchfork_coarse():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return construct_piece(SurfaceKind("pitchfork", math.pi), math.pi / 16, SolverConfig())
