"""The compiled kernels and the numpy fallback compute the same things."""

import numpy as np
import pytest

from streampca import _pykernels, backend
from streampca.updates import LearningSchedule, init_state, stream

from conftest import gaussian_data

compiled = pytest.mark.skipif("compiled" not in backend.available(), reason="extension not built")


def test_backend_switching():
    before = backend.name()
    with backend.use_backend("python") as k:
        assert k is _pykernels and backend.name() == "python"
    assert backend.name() == before
    with pytest.raises(ValueError):
        backend.set_backend("fortran")


@compiled
def test_qr_and_eigen_agree():
    from streampca import _kernels

    rng = np.random.default_rng(0)
    A = rng.standard_normal((30, 6))
    Qa, Ra, fa = _kernels.householder_qr(A, 1e-12)
    Qb, Rb, fb = _pykernels.householder_qr(A, 1e-12)
    assert fa == fb == -1
    np.testing.assert_allclose(Qa, Qb, atol=1e-13)
    np.testing.assert_allclose(Ra, Rb, atol=1e-13)
    B = rng.standard_normal((25, 40))
    S = B @ B.T
    wa, _, _ = _kernels.jacobi_eigh(S, 1e-12, 100)
    wb, _, _ = _pykernels.jacobi_eigh(S, 1e-12, 100)
    np.testing.assert_allclose(np.sort(wa), np.sort(wb), rtol=1e-12, atol=1e-12 * np.linalg.norm(S))


@compiled
@pytest.mark.parametrize("algo,mode", [
    ("implicit_krasulina", "pinv"), ("implicit_krasulina", "gram"),
    ("explicit_unconstrained", "pinv"), ("oja", "orthonormal"), ("krasulina", "orthonormal"),
])
def test_streams_agree(algo, mode):
    rng = np.random.default_rng(1)
    Y = gaussian_data(rng, np.linspace(3, 0.2, 15), 3000)
    s0 = init_state(15, 4, mode, rng, refresh_period=700)
    eta0 = {"implicit_krasulina": 4.5, "explicit_unconstrained": 0.02}.get(algo, 0.3)
    sched = LearningSchedule(eta0, 0.8)
    out = {}
    for name in ("python", "compiled"):
        with backend.use_backend(name):
            out[name] = stream(s0, Y, algo, sched).C
    np.testing.assert_allclose(out["compiled"], out["python"], rtol=1e-9, atol=1e-10)
