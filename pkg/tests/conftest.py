import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def maxwellian(rng, N, d=3, theta=1.0, weight=None):
    from ballistic_annihilation import ParticleEnsemble

    v = np.sqrt(theta) * rng.standard_normal((N, d))
    return ParticleEnsemble(v, 1.0 / N if weight is None else weight)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
