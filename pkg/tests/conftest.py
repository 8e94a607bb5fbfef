import os

import pytest
from hypothesis import settings

from langevin_coupling import constants as C
from langevin_coupling import potentials as P
from langevin_coupling import semimetric as S

settings.register_profile("default", deadline=None, max_examples=60, derandomize=True)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_RESULTS = []


def record_acceptance(number, passed, detail):
    ACCEPTANCE_RESULTS.append((number, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: r[0]):
        terminalreporter.write_line(f"CRITERION {number:>2} {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def dw_params():
    return C.double_well_params()


@pytest.fixture(scope="session")
def dw_constants(dw_params):
    return C.derive_base_constants(dw_params)


@pytest.fixture(scope="session")
def dw_particle(dw_params, dw_constants):
    return C.derive_particle_constants(dw_params, dw_constants)


@pytest.fixture(scope="session")
def dw_profile(dw_constants):
    return S.DistanceProfile.from_constants(dw_constants)


@pytest.fixture(scope="session")
def dw_pot():
    return P.double_well()
