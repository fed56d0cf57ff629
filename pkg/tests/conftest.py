import numpy as np
import pytest


def reference_step(W, self_w, b, x):
    """Textbook form of the update, coordinate by coordinate.

    Works on Fractions when ``b`` is a positive integer, so it can serve as
    an exact oracle for the vectorised implementation.
    """
    n = len(x)
    out = []
    for i in range(n):
        s = sum(W[i][j] * x[j] for j in range(n))
        d = sum(W[i][j] for j in range(n))
        if x[i] in (0, 1):
            out.append(x[i])
            continue
        num = self_w[i] * x[i] + x[i] ** b[i] * s
        den = self_w[i] + x[i] ** b[i] * s + (1 - x[i]) ** b[i] * (d - s)
        out.append(num / den)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report: one line per criterion, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
