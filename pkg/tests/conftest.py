import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from poismix.cmp import CmpParams  # noqa: E402
from poismix.mixture import HarmoniumParams  # noqa: E402

ACCEPTANCE_RESULTS = {}


def random_harmonium(rng, m_n, m_c, scale=0.5, bias_mean=0.0):
    return HarmoniumParams(
        bias=rng.normal(bias_mean, scale, m_n),
        cat_bias=rng.normal(0.0, scale, m_c),
        interaction=rng.normal(0.0, scale, (m_c, m_n)),
    )


def random_cmp(rng, m_n, m_c, scale=0.5, bias_mean=0.0):
    h = random_harmonium(rng, m_n, m_c, scale, bias_mean)
    return CmpParams(h, rng.normal(0.0, scale, (m_n, 2)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def record_acceptance(number, title, passed, detail=""):
    """Store one acceptance outcome for the end-of-session summary."""
    ACCEPTANCE_RESULTS[number] = (title, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        title, passed, detail = ACCEPTANCE_RESULTS[number]
        status = "PASS" if passed else "FAIL"
        line = f"[{status}] criterion {number}: {title}"
        terminalreporter.write_line(line + (f" -- {detail}" if detail else ""))
