import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

sys.path.insert(0, os.path.dirname(__file__))

from wavetrace.profiles import make_profile  # noqa: E402
from wavetrace.symbols import PhasePoint  # noqa: E402

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


PROFILE_SPECS = {
    "linear": dict(b="linear"),
    "sine": dict(b="shifted-sine"),
    "tanh": dict(b="tanh"),
    "linear+bump": dict(b="linear", u="bump", u_params={"center": [0.3, -0.2], "radius": 1.5, "amplitude": 0.4}),
    "sine+bump": dict(b="shifted-sine", u="bump", u_params={"center": [0.0, 0.5], "radius": 2.0, "amplitude": 0.3}),
}


@pytest.fixture(params=sorted(PROFILE_SPECS))
def any_profile(request):
    return make_profile(**PROFILE_SPECS[request.param])


@pytest.fixture
def linear():
    return make_profile("linear")


@pytest.fixture
def sine():
    return make_profile("shifted-sine")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


coord = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False, allow_infinity=False)
points = st.builds(PhasePoint, coord, coord, coord, coord)
profile_names = st.sampled_from(sorted(PROFILE_SPECS))


def profile_of(name):
    return make_profile(**PROFILE_SPECS[name])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        terminalreporter.write_line(results[k])
