import numpy as np
import pytest

from streampca import backend


@pytest.fixture(params=backend.available())
def kernels(request):
    """Run the test once per available kernel backend."""
    with backend.use_backend(request.param) as k:
        yield k


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_full_rank(rng, d, k, cond_floor=0.1):
    """d x k matrix with singular values in [cond_floor, 1 + cond_floor]."""
    U, _ = np.linalg.qr(rng.standard_normal((d, k)))
    V, _ = np.linalg.qr(rng.standard_normal((k, k)))
    s = cond_floor + rng.random(k)
    return (U * s) @ V.T


def gaussian_data(rng, spectrum, n):
    d = len(spectrum)
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    Y = Q @ (np.sqrt(np.asarray(spectrum, dtype=float))[:, None] * rng.standard_normal((d, n)))
    return Y - Y.mean(axis=1, keepdims=True)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.REPORT):
        terminalreporter.write_line(mod.REPORT[n])
