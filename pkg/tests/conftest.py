import numpy as np
import pytest

from kgi.functional import FunctionHandle


def smooth_function_1d():
    """u(x) = sin(3x) + x^2 / 2 with derivatives up to order 4."""

    def derivative(X, alpha):
        k = alpha[0]
        x = X[:, 0]
        s = [np.sin(3 * x), 3 * np.cos(3 * x), -9 * np.sin(3 * x), -27 * np.cos(3 * x), 81 * np.sin(3 * x)][k]
        poly = [0.5 * x * x, x, np.ones_like(x), 0 * x, 0 * x][k]
        return s + poly

    return FunctionHandle(value=lambda X: derivative(X, (0,)),
                          gradient=lambda X: derivative(X, (1,))[:, None],
                          derivative=derivative)


def nested_points(n):
    """0, 1, 1/2, 1/4, 3/4, 1/8, ...: every prefix is a nested, densifying set."""
    pts = [0.0, 1.0]
    k = 1
    while len(pts) < n:
        k *= 2
        pts += [j / k for j in range(1, k, 2)]
    return np.array(pts[:n])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
