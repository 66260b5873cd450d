import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# (alpha*, lambda*) of the small-eigenvalue search for d = 3, p = 3, eps = 0.05, r = 6.5
ALPHA_STAR = 0.9545752434688168
LAMBDA_STAR = 0.024999999935961442


@pytest.fixture(scope="session")
def profile_331():
    from artifact.profile import integrate_profile
    return integrate_profile(1.0, 3.0, 3)


@pytest.fixture(scope="session")
def branch_setup():
    from artifact.branch import BranchConfig, prepare_setup
    return prepare_setup(BranchConfig(alpha_star=ALPHA_STAR, lambda_star=LAMBDA_STAR))


@pytest.fixture(scope="session")
def branch_setup_no_ancient():
    from artifact.branch import BranchConfig, prepare_setup
    return prepare_setup(BranchConfig(alpha_star=ALPHA_STAR, lambda_star=LAMBDA_STAR), with_ancient=False)


# one verdict line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
