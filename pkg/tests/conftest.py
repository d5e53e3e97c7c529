import sys
import warnings

import numpy as np
import pytest

from dwnls.branch import BranchSolver
from dwnls.hypotheses import h4_report
from dwnls.spectral import default_pair


@pytest.fixture(autouse=True)
def _quiet_tail_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*tail mass.*")
        yield


@pytest.fixture(scope="session")
def pair_L3():
    return default_pair(L=3.0, x_max=30.0, n=1499)


@pytest.fixture(scope="session")
def branch_L6():
    """Bifurcation data and a short asymmetric branch at L=6."""
    sp = default_pair(L=6.0, x_max=60.0, n=1999)
    h4 = h4_report(sp)
    s = BranchSolver(sp)
    bif = s.find_bifurcation(h4)
    br = s.asymmetric_branch(np.array([0.02, 0.05, 0.1, 0.2]) * bif.rho0_star, bif)
    return sp, h4, s, bif, br


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)
