import numpy as np
import pytest

from uikf.lti_system import SystemModel


def random_spd(rng, k, scale=1.0, floor=0.1):
    B = rng.standard_normal((k, k))
    return scale * (B @ B.T / k + floor * np.eye(k))


def random_model(rng, n=None, m=None, p=None):
    """Well-conditioned random model with full-rank C G."""
    n = n or int(rng.integers(2, 7))
    p = p or int(rng.integers(1, min(n, 4) + 1))
    m = m or int(rng.integers(1, min(p, 2) + 1))
    A = rng.standard_normal((n, n))
    A *= 0.9 / max(1.0, np.max(np.abs(np.linalg.eigvals(A))))
    while True:
        G = rng.standard_normal((n, m))
        C = rng.standard_normal((p, n))
        sv = np.linalg.svd(C @ G, compute_uv=False)
        if sv[-1] > 0.1 * sv[0]:
            break
    return SystemModel(A, G, C, random_spd(rng, n, 0.1), random_spd(rng, p, 0.1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def scalar_model(a=1.0, g=1.0, c=1.0, q=0.0, r=1.0):
    return SystemModel([[a]], [[g]], [[c]], [[q]], [[r]])


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda s: (int("".join(c for c in s if c.isdigit())), s)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
