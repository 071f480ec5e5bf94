import re

import numpy as np
import pytest

from igasc.obs_models import Family, Theta

# parameter sets used throughout.  The Weibull set uses a smaller psi: at
# psi = 0.7 and k >= 2 the filter is close to losing invertibility and stops
# forgetting its starting value.
THETAS = {
    Family.GaussVol: Theta(0.3, 0.2, 0.7),
    Family.TVol: Theta(0.3, 0.2, 0.7, 10.0),
    Family.ExpDur: Theta(0.3, 0.2, 0.7),
    Family.WeibullDur: Theta(0.3, 0.2, 0.3, 2.0),
}


def dkw_bound(n, alpha=0.001):
    """Dvoretzky-Kiefer-Wolfowitz band half-width at confidence 1 - alpha."""
    return np.sqrt(np.log(2.0 / alpha) / (2.0 * n))


@pytest.fixture(params=list(Family), ids=lambda f: f.value)
def family(request):
    return request.param


@pytest.fixture
def theta(family):
    return THETAS[family]


# acceptance summary: one line per criterion at the end of the run

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_c(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = int(m.group(1))
    failed = report.failed or (report.when == "call" and report.outcome != "passed")
    if report.when == "call" or failed:
        detail = dict(report.user_properties).get("detail", "")
        prev = _ACCEPTANCE.get(key)
        if prev is None or failed:
            _ACCEPTANCE[key] = (m.group(2), "FAIL" if failed else "PASS", detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        name, status, detail = _ACCEPTANCE[key]
        line = f"criterion {key:2d} {status}  {name.replace('_', ' ')}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
