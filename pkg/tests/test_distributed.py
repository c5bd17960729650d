import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streampca.distributed import CombineWeights, SyncConfig, combine_average, combine_qr, run_synchronous
from streampca.errors import ConfigError, DimensionMismatch, RankDeficient
from streampca.pca_core import CovarianceLoss
from streampca.updates import LearningSchedule, seeded_start, stream

from conftest import gaussian_data, random_full_rank


def test_combine_identical_models(rng):
    C = rng.standard_normal((5, 2))
    np.testing.assert_allclose(combine_average([C, C, C]), C, rtol=1e-15, atol=0)
    np.testing.assert_array_equal(combine_average([C]), C)


def test_combine_zero_weight_selects_first(rng):
    A, B = rng.standard_normal((4, 2)), rng.standard_normal((4, 2))
    np.testing.assert_array_equal(combine_average([A, B], CombineWeights([1.0, 0.0])), A)


def test_combine_hand_pair():
    A = np.array([[1.0], [2.0]])
    B = np.array([[3.0], [-6.0]])
    np.testing.assert_array_equal(combine_average([A, B], [1.0, 1.0]), [[2.0], [-2.0]])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.floats(1e-3, 1e3), st.integers(0, 2**32 - 1))
def test_combine_weight_rescaling(m, scale, seed):
    rng = np.random.default_rng(seed)
    models = [random_full_rank(rng, 6, 2) for _ in range(m)]
    w = rng.random(m) + 0.1
    np.testing.assert_allclose(combine_average(models, w * scale), combine_average(models, w), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_combine_permutation_invariant(m, seed):
    rng = np.random.default_rng(seed)
    models = [random_full_rank(rng, 6, 2) for _ in range(m)]
    perm = rng.permutation(m)
    np.testing.assert_allclose(combine_average([models[i] for i in perm]), combine_average(models), atol=1e-12)


def test_combine_errors(rng):
    with pytest.raises(DimensionMismatch):
        combine_average([np.ones((3, 1)), np.ones((2, 1))])
    with pytest.raises(DimensionMismatch):
        combine_average([np.ones((3, 1))] * 2, [1.0])
    with pytest.raises(ValueError):
        CombineWeights([0.0, 0.0])
    with pytest.raises(ValueError):
        CombineWeights([1.0, -0.5])
    with pytest.raises(RankDeficient):
        combine_average([np.array([[1.0], [0.0]]), np.array([[-1.0], [0.0]])])


def test_combine_qr_cases(rng):
    C = np.linalg.qr(rng.standard_normal((5, 2)))[0]
    np.testing.assert_allclose(combine_qr([C, C]), C, atol=1e-14)
    e1, e2 = np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]])
    r = 0.7071067811865476
    np.testing.assert_allclose(combine_qr([e1, e2]), [[r], [r]], atol=1e-15)
    with pytest.raises(RankDeficient):
        combine_qr([e1, -e1])
    with pytest.raises(ValueError):
        combine_qr([2 * e1, e2])
    Q = combine_qr([np.linalg.qr(rng.standard_normal((6, 3)))[0] for _ in range(4)])
    np.testing.assert_allclose(Q.T @ Q, np.eye(3), atol=1e-12)


def test_sync_config_validation():
    with pytest.raises(ConfigError):
        SyncConfig(0)
    with pytest.raises(ConfigError):
        SyncConfig(2, sync_period=0)
    with pytest.raises(ConfigError) as exc:
        SyncConfig(2, combine_rule="median")
    assert exc.value.field == "combine"
    with pytest.raises(ConfigError):
        SyncConfig(2, combine_rule="average").check_algorithm("oja")
    with pytest.raises(ConfigError):
        SyncConfig(2, combine_rule="average_qr").check_algorithm("implicit_krasulina")
    SyncConfig(2, combine_rule="average_qr").check_algorithm("krasulina")


@pytest.fixture(scope="module")
def data():
    return gaussian_data(np.random.default_rng(0), np.linspace(4, 0.2, 12), 6003)


def _run(data, m, period, algo="implicit_krasulina", parallel=False, seed=5, **kw):
    combine = "average_qr" if algo in ("oja", "krasulina") else "average"
    cfg = SyncConfig(m, period, combine, parallel=parallel, **kw)
    eta0 = 3.6 if algo == "implicit_krasulina" else 0.3
    return run_synchronous(data, cfg, algo, LearningSchedule(eta0, 0.8), seed, k=3)


@pytest.mark.parametrize("algo", ["implicit_krasulina", "oja"])
def test_single_worker_matches_single_machine(kernels, data, algo):
    res = _run(data, 1, 500, algo)
    mode = "orthonormal" if algo == "oja" else "pinv"
    order, s = seeded_start(5, data.shape[1], 12, 3, mode)
    loss = CovarianceLoss(data)
    ref = [(0, loss(s))]
    end = stream(s, data[:, order], algo, LearningSchedule(3.6 if algo != "oja" else 0.3, 0.8), every=500,
                 callback=lambda st: ref.append((st.step, loss(st))))
    ref.append((end.step, loss(end)))  # 6003 is not a multiple of 500
    assert res.combined.steps == [r[0] for r in ref]
    assert res.combined.losses == [r[1] for r in ref]  # bitwise
    assert res.combined.losses == res.workers.losses


def test_one_combine_when_period_covers_shard(data):
    res = _run(data, 3, 10_000)
    assert res.combined.steps == [0, 2001]
    assert res.dropped == 0


def test_remainder_dropped(data):
    res = _run(data, 4, 700)
    assert res.dropped == 3
    assert res.combined.steps[-1] == 6000 // 4


def test_ten_workers_trace_shape(data):
    res = _run(data, 10, 100)
    size = data.shape[1] // 10
    assert res.combined.steps == [0] + list(range(100, size, 100)) + [size]
    assert len(res.workers) == len(res.combined)
    assert np.all(np.isfinite(res.combined.losses))
    assert all(len(w) == 10 for w in res.worker_losses)
    assert res.state.step == size


@pytest.mark.parametrize("algo", ["implicit_krasulina", "krasulina"])
def test_sequential_runs_are_bitwise_deterministic(data, algo):
    a = _run(data, 5, 250, algo)
    b = _run(data, 5, 250, algo)
    assert a.combined.losses == b.combined.losses
    np.testing.assert_array_equal(a.state.C, b.state.C)


@pytest.mark.parametrize("algo", ["implicit_krasulina", "oja"])
def test_parallel_matches_sequential(data, algo):
    a = _run(data, 6, 300, algo)
    b = _run(data, 6, 300, algo, parallel=True)
    np.testing.assert_allclose(b.combined.losses, a.combined.losses, rtol=1e-12)
    np.testing.assert_allclose(b.state.C, a.state.C, atol=1e-12)


def test_sample_weights_equal_uniform_for_equal_shards(data):
    a = _run(data, 4, 500)
    b = _run(data, 4, 500, weight_policy="samples")
    np.testing.assert_allclose(b.combined.losses, a.combined.losses, rtol=1e-12)


def test_orthonormal_workers_stay_orthonormal(data):
    res = _run(data, 4, 200, "oja")
    C = res.state.C
    np.testing.assert_allclose(C.T @ C, np.eye(3), atol=1e-12)


def test_failed_combine_keeps_worker_states(monkeypatch, data):
    import streampca.distributed as dist

    def boom(models, weights=None):
        raise RankDeficient("injected")

    monkeypatch.setattr(dist, "combine_average", boom)
    res = _run(data, 3, 1000)
    assert res.failed_rounds == [1000, 2000, 2001]
    # the combined model never moved off the start
    assert len(set(res.combined.losses)) == 1


def test_too_few_samples(data):
    with pytest.raises(ValueError):
        run_synchronous(data[:, :3], SyncConfig(4), "implicit_krasulina", LearningSchedule(1.0, 0.8), 0, k=2)
