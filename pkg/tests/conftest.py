import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_psd_gamma(rng, N):
    """Symmetric PSD matrix with unit diagonal (a correlation matrix)."""
    A = rng.standard_normal((N, N + 2))
    G = A @ A.T
    d = np.sqrt(np.diag(G))
    G = G / np.outer(d, d)
    return (G + G.T) / 2


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "ACCEPTANCE_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
