import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def unit_sphere_grid(row_norm, n=200_000):
    """Points on the 2-D unit sphere of a norm: rescaled points of the circle.

    ``row_norm`` maps an ``(N, 2)`` array to the ``N`` row norms.
    """
    theta = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    Z = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return Z / row_norm(Z)[:, None]


# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture
def criterion():
    def record(number, passed, detail):
        ACCEPTANCE[number] = (bool(passed), detail)
        return bool(passed)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
