import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"


def random_orthogonal(rng, p):
    q, r = np.linalg.qr(rng.standard_normal((p, p)))
    return q * np.sign(np.diag(r))


def random_pd(rng, p, spread=2.0):
    """PD matrix with log-uniform spectrum over ``[10**-spread/2, 10**spread/2]``."""
    e = 10.0 ** rng.uniform(-spread / 2, spread / 2, p)
    q = random_orthogonal(rng, p)
    m = (q * e) @ q.T
    return 0.5 * (m + m.T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    results = getattr(acceptance, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
