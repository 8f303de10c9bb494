import numpy as np
import pytest


def dense_dictionary(filters, stride, signal_len):
    """Explicit matrix whose column ``i * M + j`` is filter ``i`` shifted by ``j * stride``."""
    k, flen = filters.shape
    m = (signal_len - flen) // stride + 1
    D = np.zeros((signal_len, k * m))
    for i in range(k):
        for j in range(m):
            D[j * stride : j * stride + flen, i * m + j] = filters[i]
    return D


def dense_lca(signal, D, tau, dt, n_iter, lam):
    """Textbook Euler integration of the LCA with an explicit Gram matrix."""
    alpha = dt / tau
    p = D.T @ signal
    inhib = D.T @ D - np.eye(D.shape[1])
    u = np.zeros(D.shape[1])
    a = np.zeros_like(u)
    for _ in range(n_iter):
        u = alpha * (p - inhib @ a) + (1 - alpha) * u
        a = np.where(np.abs(u) < lam, 0.0, u)
    return u, a


def random_unit_filters(rng, k, flen):
    h = rng.standard_normal((k, flen))
    return h / np.linalg.norm(h, axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def report_criterion(number, title, passed, detail):
    line = f"criterion {number} {'PASS' if passed else 'FAIL'}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
