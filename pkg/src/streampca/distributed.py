"""Synchronous multi-worker training with periodic model averaging.

Each worker streams over its own shard; every ``sync_period`` steps the
worker matrices are combined and the result is broadcast back.  Implicit
Krasulina workers are combined by a weighted arithmetic mean.  Orthonormal
(Oja / Krasulina) workers get the same mean followed by a QR step, since an
average of orthonormal frames is not orthonormal.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .data_io import shard
from .errors import ConfigError, DimensionMismatch, RankDeficient
from .pca_core import ComponentState, CovarianceLoss, InverseMode
from .trace import LossTrace
from .updates import ORTHONORMAL_ALGOS, STREAMING_ALGOS, seeded_start, stream

log = logging.getLogger(__name__)

COMBINE_RULES = ("average", "average_qr")
WEIGHT_POLICIES = ("uniform", "samples")


@dataclass
class CombineWeights:
    """Nonnegative per-model weights; only their ratios matter."""

    alphas: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=np.float64).reshape(-1)
        if a.size == 0 or np.any(a < 0) or not np.any(a > 0) or not np.all(np.isfinite(a)):
            raise ValueError(f"weights must be finite, nonnegative and not all zero: {a}")
        self.alphas = a

    @classmethod
    def uniform(cls, m):
        return cls(np.full(m, 1.0 / m))

    def normalized(self):
        return self.alphas / self.alphas.sum()


def combine_average(models, weights=None):
    """Weighted mean ``sum_i a_i C_i / sum_i a_i``; raises RankDeficient if it loses rank."""
    models = [np.asarray(C, dtype=np.float64) for C in models]
    if not models:
        raise ValueError("nothing to combine")
    shape = models[0].shape
    if any(C.shape != shape for C in models):
        raise DimensionMismatch("all models must have the same shape")
    if weights is None:
        weights = CombineWeights.uniform(len(models))
    elif not isinstance(weights, CombineWeights):
        weights = CombineWeights(weights)
    if weights.alphas.size != len(models):
        raise DimensionMismatch(f"{weights.alphas.size} weights for {len(models)} models")
    w = weights.normalized()
    out = np.zeros(shape)
    for wi, C in zip(w, models):
        if wi:
            out += wi * C
    linalg.qr_factor(out)  # rank check
    return out


def combine_qr(models, weights=None):
    """Average of orthonormal frames, re-orthonormalised."""
    for C in models:
        err = np.max(np.abs(np.asarray(C).T @ np.asarray(C) - np.eye(np.shape(C)[1])))
        if err > 1e-10:
            raise ValueError(f"combine_qr needs orthonormal inputs (|C^T C - I| = {err:.2g})")
    avg = combine_average(models, weights)
    if any(np.array_equal(avg, C) for C in models):
        # one effective model: it is already orthonormal, and a second QR would only add rounding
        return avg
    return linalg.qr_orthonormalize(avg)


@dataclass
class SyncConfig:
    workers: int
    sync_period: int = 1000
    combine_rule: str = "average"
    weight_policy: str = "uniform"
    parallel: bool = False

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("workers", "must be at least 1")
        if self.sync_period < 1:
            raise ConfigError("sync_period", "must be positive")
        if self.combine_rule not in COMBINE_RULES:
            raise ConfigError("combine", f"must be one of {COMBINE_RULES}")
        if self.weight_policy not in WEIGHT_POLICIES:
            raise ConfigError("weights", f"must be one of {WEIGHT_POLICIES}")

    def check_algorithm(self, algo):
        if algo not in STREAMING_ALGOS:
            raise ConfigError("algorithm", f"{algo!r} cannot run distributed")
        wants_qr = algo in ORTHONORMAL_ALGOS
        if wants_qr != (self.combine_rule == "average_qr"):
            need = "average_qr" if wants_qr else "average"
            raise ConfigError("combine", f"{algo} workers need combine rule {need!r}, got {self.combine_rule!r}")


@dataclass
class WorkerState:
    id: int
    state: ComponentState
    samples_seen: int
    partition: np.ndarray


@dataclass
class SyncResult:
    state: ComponentState
    combined: LossTrace
    workers: LossTrace
    worker_losses: list = field(default_factory=list)
    failed_rounds: list = field(default_factory=list)
    dropped: int = 0


def _advance(worker, lo, hi, algo, schedule):
    worker.state = stream(worker.state, worker.partition[:, lo:hi], algo, schedule)
    worker.samples_seen += hi - lo
    return worker


def run_synchronous(
    Y,
    config,
    algo,
    schedule,
    seed,
    *,
    inverse_mode="pinv",
    refresh_period=1000,
    k,
    evaluator=None,
    oracle_loss=None,
    combined_sink=None,
    worker_sink=None,
):
    """Simulate ``config.workers`` synchronous workers over the columns of Y.

    Data are permuted by ``seed`` and cut into equal shards (the remainder
    is dropped); all workers start from the same seeded matrix.  Trace steps
    count per-worker iterations, so with one worker the combined trace
    matches a single-machine run on the same seed.
    """
    config.check_algorithm(algo)
    Y = np.asarray(Y, dtype=np.float64)
    d, n = Y.shape
    m = config.workers
    if n < m:
        raise ValueError(f"{n} samples cannot feed {m} workers")
    mode = InverseMode.ORTHONORMAL if algo in ORTHONORMAL_ALGOS else InverseMode(inverse_mode)
    order, start = seeded_start(seed, n, d, k, mode, refresh_period)
    parts = shard(order, m)
    size = len(parts[0])
    dropped = n - size * m
    workers = [WorkerState(i, start.copy(), 0, np.ascontiguousarray(Y[:, idx])) for i, idx in enumerate(parts)]
    evaluator = evaluator or CovarianceLoss(Y)
    combined_trace = LossTrace(oracle_loss=oracle_loss, sink=combined_sink)
    worker_trace = LossTrace(oracle_loss=oracle_loss, sink=worker_sink)
    result = SyncResult(start, combined_trace, worker_trace, dropped=dropped)
    loss0 = evaluator(start)
    combined_trace.append(0, loss0)
    worker_trace.append(0, loss0)
    result.worker_losses.append(np.full(m, loss0))
    combine = combine_qr if config.combine_rule == "average_qr" else combine_average
    pool = ThreadPoolExecutor(max_workers=m) if config.parallel and m > 1 else None
    combined = start
    try:
        pos = 0
        while pos < size:
            hi = min(size, pos + config.sync_period)
            if pool is not None:
                list(pool.map(lambda w: _advance(w, pos, hi, algo, schedule), workers))
            else:
                for w in workers:
                    _advance(w, pos, hi, algo, schedule)
            losses = np.array([evaluator(w.state) for w in workers])
            result.worker_losses.append(losses)
            worker_trace.append(hi, float(np.mean(losses)))
            if config.weight_policy == "samples":
                weights = CombineWeights([w.samples_seen for w in workers])
            else:
                weights = CombineWeights.uniform(m)
            try:
                C = combine([w.state.C for w in workers], weights)
            except RankDeficient:
                log.warning("combined model lost rank after step %d; keeping worker states", hi)
                result.failed_rounds.append(hi)
            else:
                combined = _broadcast(workers, C, mode, refresh_period)
            combined_trace.append(hi, evaluator(combined))
            pos = hi
    finally:
        if pool is not None:
            pool.shutdown()
    result.state = combined
    return result


def _broadcast(workers, C, mode, refresh_period):
    step = workers[0].state.step
    base = next((w.state for w in workers if np.array_equal(w.state.C, C)), None)
    if base is not None:
        # combine was the identity (e.g. one worker): keep the maintained inverse as is
        combined = base.copy()
    else:
        combined = ComponentState.create(C, mode, refresh_period, step=step)
    for w in workers:
        w.state = combined.copy()
        w.state.step = step
    return combined
