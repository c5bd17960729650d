"""Experiment driver behind the command line: config, runs, sweeps, CSV output.

A config is a YAML file with the sections below; every key is optional.

    data:
      kind: synthetic        # synthetic | csv | idx
      path: null             # csv or idx file
      has_header: false
      d: 50                  # synthetic only
      n: 50000
      spectrum: null         # d descending values; null means gap_spectrum(d)
      seed: 0
    k: 5
    algorithm: implicit_krasulina
    schedule:
      eta0: null             # null picks default_eta0(algorithm, d)
      gamma: null            # null picks the per-algorithm default
    inverse_mode: pinv       # pinv | gram
    refresh_period: 1000
    iterations: null         # cap on streaming steps, or EM iterations (default 50)
    seed: 0
    trace_every: 1000
    oracle: true
    validation_fraction: 0.0
    repeats: 1
    scales: [0.1, 1.0, 10.0]
    distributed:
      workers: 10
      sync_period: 1000
      combine: null          # average | average_qr; null follows the algorithm
      weights: uniform       # uniform | samples
      parallel: false
"""

import copy
import csv
import dataclasses
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from . import data_io
from .distributed import SyncConfig, run_synchronous
from .errors import ConfigError
from .pca_core import CovarianceLoss, InverseMode, compression_loss
from .trace import LossTrace, excess_pct
from .updates import (
    DEFAULT_GAMMA,
    ORTHONORMAL_ALGOS,
    STREAMING_ALGOS,
    LearningSchedule,
    batch_em_fit,
    batch_pca_oracle,
    seeded_start,
    stream,
)

log = logging.getLogger(__name__)

ALGORITHMS = STREAMING_ALGOS + ("batch_em", "oracle")
DEFAULT_EM_ITERS = 50

SUMMARY_HEADER = [
    "algorithm", "k", "d", "n", "eta0", "gamma", "seed", "steps",
    "final_loss", "oracle_loss", "excess_pct", "wall_ms",
]
SWEEP_HEADER = [
    "scale", "eta0", "repeats", "loss_mean", "loss_std", "excess_mean", "excess_std",
    "val_loss_mean", "val_loss_std",
]


def gap_spectrum(d, top=(5.0, 4.5, 4.0, 3.5, 3.0), tail=(2.0, 0.2)):
    """Covariance spectrum with a few leading values over an evenly spaced tail."""
    top = list(top)
    if d < len(top) + 1:
        raise ConfigError("data.d", f"gap spectrum needs d > {len(top)}")
    return top + list(np.linspace(tail[0], tail[1], d - len(top)))


def default_eta0(algorithm, d):
    """Middle of the sweep grid: O(1) for orthonormal methods, O(d) for implicit."""
    if algorithm == "implicit_krasulina":
        return 0.3 * d
    return 0.3


@dataclass
class DataConfig:
    kind: str = "synthetic"
    path: Optional[str] = None
    has_header: bool = False
    d: int = 50
    n: int = 50000
    spectrum: Optional[list] = None
    seed: int = 0


@dataclass
class ScheduleConfig:
    eta0: Optional[float] = None
    gamma: Optional[float] = None


@dataclass
class DistributedConfig:
    workers: int = 10
    sync_period: int = 1000
    combine: Optional[str] = None
    weights: str = "uniform"
    parallel: bool = False


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    k: int = 5
    algorithm: str = "implicit_krasulina"
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    inverse_mode: str = "pinv"
    refresh_period: int = 1000
    iterations: Optional[int] = None
    seed: int = 0
    trace_every: int = 1000
    oracle: bool = True
    validation_fraction: float = 0.0
    repeats: int = 1
    scales: list = field(default_factory=lambda: [0.1, 1.0, 10.0])
    distributed: DistributedConfig = field(default_factory=DistributedConfig)

    def validate(self):
        for name, value, kinds in self._typed_fields():
            if value is not None and (isinstance(value, bool) != (kinds is bool) or not isinstance(value, kinds)):
                raise ConfigError(name, f"expected {getattr(kinds, '__name__', 'number')}, got {value!r}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError("algorithm", f"{self.algorithm!r} not in {ALGORITHMS}")
        if self.data.kind not in ("synthetic", "csv", "idx"):
            raise ConfigError("data.kind", f"unknown data kind {self.data.kind!r}")
        if self.data.kind != "synthetic" and not self.data.path:
            raise ConfigError("data.path", f"{self.data.kind} data needs a path")
        for name in ("k", "refresh_period", "trace_every", "repeats"):
            if not getattr(self, name) >= 1:
                raise ConfigError(name, "must be a positive integer")
        if self.data.kind == "synthetic" and not (self.data.d >= 1 and self.data.n >= 1):
            raise ConfigError("data", "d and n must be positive")
        if self.iterations is not None and self.iterations < 1:
            raise ConfigError("iterations", "must be positive")
        if self.inverse_mode not in ("pinv", "gram"):
            raise ConfigError("inverse_mode", "must be pinv or gram")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction", "must lie in [0, 1)")
        if not self.scales or any(not s > 0 for s in self.scales):
            raise ConfigError("scales", "must be a nonempty list of positive numbers")
        if self.schedule.eta0 is not None and not self.schedule.eta0 > 0:
            raise ConfigError("schedule.eta0", "must be positive")
        if self.schedule.gamma is not None and not 0.5 <= self.schedule.gamma < 1.0:
            raise ConfigError("schedule.gamma", "must lie in [0.5, 1)")
        return self

    def _typed_fields(self):
        num = (int, float, np.integer, np.floating)
        integer = (int, np.integer)
        return [
            ("k", self.k, integer),
            ("refresh_period", self.refresh_period, integer),
            ("iterations", self.iterations, integer),
            ("seed", self.seed, integer),
            ("trace_every", self.trace_every, integer),
            ("repeats", self.repeats, integer),
            ("validation_fraction", self.validation_fraction, num),
            ("oracle", self.oracle, bool),
            ("data.d", self.data.d, integer),
            ("data.n", self.data.n, integer),
            ("data.seed", self.data.seed, integer),
            ("data.has_header", self.data.has_header, bool),
            ("schedule.eta0", self.schedule.eta0, num),
            ("schedule.gamma", self.schedule.gamma, num),
            ("distributed.workers", self.distributed.workers, integer),
            ("distributed.sync_period", self.distributed.sync_period, integer),
            ("distributed.parallel", self.distributed.parallel, bool),
        ]

    def learning_schedule(self, d):
        eta0 = self.schedule.eta0 if self.schedule.eta0 is not None else default_eta0(self.algorithm, d)
        gamma = self.schedule.gamma if self.schedule.gamma is not None else DEFAULT_GAMMA.get(self.algorithm, 0.9)
        return LearningSchedule(eta0, gamma)

    def sync_config(self):
        dc = self.distributed
        combine = dc.combine or ("average_qr" if self.algorithm in ORTHONORMAL_ALGOS else "average")
        return SyncConfig(dc.workers, dc.sync_period, combine, dc.weights, dc.parallel)

    def to_dict(self):
        return _plain(dataclasses.asdict(self))

    def with_overrides(self, **kw):
        """Copy with dotted-key overrides, e.g. ``schedule.eta0=0.5``; None values are skipped."""
        cfg = copy.deepcopy(self)
        for key, value in kw.items():
            if value is None:
                continue
            obj = cfg
            *parents, leaf = key.split(".")
            for p in parents:
                obj = getattr(obj, p)
            if not hasattr(obj, leaf):
                raise ConfigError(key, "unknown field")
            setattr(obj, leaf, value)
        return cfg


def _plain(obj):
    """Nested dict with numpy scalars/arrays replaced by plain Python values, for YAML."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


_SECTIONS = {"data": DataConfig, "schedule": ScheduleConfig, "distributed": DistributedConfig}


def config_from_dict(raw):
    raw = dict(raw or {})
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    kwargs = {}
    for key, value in raw.items():
        if key in _SECTIONS:
            cls = _SECTIONS[key]
            if not isinstance(value, dict):
                raise ConfigError(key, "must be a mapping")
            sub = {f.name for f in dataclasses.fields(cls)}
            bad = set(value) - sub
            if bad:
                raise ConfigError(f"{key}.{sorted(bad)[0]}", "unknown field")
            kwargs[key] = cls(**value)
        else:
            kwargs[key] = value
    return ExperimentConfig(**kwargs)


def load_config(path):
    if path is None:
        return ExperimentConfig()
    with open(path) as f:
        raw = yaml.safe_load(f)
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    return config_from_dict(raw)


def write_config_echo(config, out_dir):
    with open(os.path.join(out_dir, "config_echo.yaml"), "w") as f:
        yaml.safe_dump(config.to_dict(), f, sort_keys=False)


def load_dataset(config):
    """Load and center the configured data."""
    dc = config.data
    if dc.kind == "synthetic":
        spectrum = dc.spectrum if dc.spectrum is not None else gap_spectrum(dc.d)
        try:
            spec = data_io.SyntheticSpec(dc.d, dc.n, tuple(spectrum), dc.seed)
        except ValueError as e:
            raise ConfigError("data.spectrum", str(e)) from None
        return data_io.synthetic_gaussian(spec)
    if dc.kind == "csv":
        return data_io.center(data_io.load_csv(dc.path, dc.has_header))
    return data_io.center(data_io.load_idx(dc.path))


@dataclass
class RunResult:
    trace: LossTrace
    summary: dict
    state: object = None


def _summary(config, dataset, schedule, steps, final_loss, oracle_loss, wall_ms):
    return {
        "algorithm": config.algorithm,
        "k": config.k,
        "d": dataset.d,
        "n": dataset.n,
        "eta0": None if schedule is None else schedule.eta0,
        "gamma": None if schedule is None else schedule.gamma,
        "seed": config.seed,
        "steps": steps,
        "final_loss": final_loss,
        "oracle_loss": oracle_loss,
        "excess_pct": excess_pct(final_loss, oracle_loss),
        "wall_ms": wall_ms,
    }


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row.get(h)) for h in header])


def _check_k(config, dataset):
    if config.k > dataset.d:
        raise ConfigError("k", f"k={config.k} exceeds data dimension d={dataset.d}")


def oracle_loss_for(dataset, k):
    return batch_pca_oracle(dataset.Y, k)[1]


def run_experiment(config, out_dir=None, dataset=None, oracle_loss=None):
    """One run of the configured algorithm; writes trace.csv and summary.csv when out_dir is set."""
    config.validate()
    if dataset is None:
        dataset = load_dataset(config)
    _check_k(config, dataset)
    if oracle_loss is None and (config.oracle or config.algorithm == "oracle"):
        oracle_loss = oracle_loss_for(dataset, config.k)
    sink = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_config_echo(config, out_dir)
        sink = open(os.path.join(out_dir, "trace.csv"), "w", newline="")
    try:
        trace = LossTrace(oracle_loss=oracle_loss, sink=sink)
        result = _dispatch(config, dataset, trace, oracle_loss)
    finally:
        if sink is not None:
            sink.close()
    if out_dir is not None:
        write_rows(os.path.join(out_dir, "summary.csv"), SUMMARY_HEADER, [result.summary])
    return result


def _dispatch(config, dataset, trace, oracle_loss):
    Y = dataset.Y
    d, n = Y.shape
    t0 = time.monotonic()
    trace.restart_clock()
    if config.algorithm == "oracle":
        state, loss = batch_pca_oracle(Y, config.k)
        trace.append(0, loss)
        wall = 1000.0 * (time.monotonic() - t0)
        return RunResult(trace, _summary(config, dataset, None, 0, loss, oracle_loss, wall), state)

    mode = InverseMode.ORTHONORMAL if config.algorithm in ORTHONORMAL_ALGOS else InverseMode(config.inverse_mode)
    order, state = seeded_start(config.seed, n, d, config.k, mode, config.refresh_period)

    if config.algorithm == "batch_em":
        iters = config.iterations or DEFAULT_EM_ITERS
        state, em_trace = batch_em_fit(Y, config.k, iters, state)
        for rec in em_trace:
            trace.append(rec.step, rec.loss)
        wall = 1000.0 * (time.monotonic() - t0)
        final = trace.final.loss
        return RunResult(trace, _summary(config, dataset, None, iters, final, oracle_loss, wall), state)

    schedule = config.learning_schedule(d)
    if config.iterations is not None:
        order = order[: config.iterations]
    stream_data = np.ascontiguousarray(Y[:, order])
    evaluate = CovarianceLoss(Y)
    trace.append(0, evaluate(state))
    state = stream(
        state, stream_data, config.algorithm, schedule,
        every=config.trace_every, callback=lambda s: trace.append(s.step, evaluate(s)),
    )
    if trace.final.step != state.step:
        trace.append(state.step, evaluate(state))
    wall = 1000.0 * (time.monotonic() - t0)
    final = trace.final.loss
    return RunResult(trace, _summary(config, dataset, schedule, state.step, final, oracle_loss, wall), state)


@dataclass
class SweepResult:
    rows: list
    best_scale: Optional[float] = None


def run_sweep(config, scales=None, out_dir=None, dataset=None):
    """Final loss at eta0 * scale for each scale, repeated over seeds seed..seed+repeats-1.

    With a validation fraction the model is trained on the training split,
    scored on both splits, and ``best_scale`` picks the lowest mean
    validation loss; otherwise it picks the lowest mean training loss.
    """
    config.validate()
    if config.algorithm not in STREAMING_ALGOS:
        raise ConfigError("algorithm", "sweeps need a streaming algorithm")
    scales = list(scales if scales is not None else config.scales)
    if dataset is None:
        dataset = load_dataset(config)
    _check_k(config, dataset)
    base = config.learning_schedule(dataset.d)
    train, val = dataset, None
    if config.validation_fraction > 0:
        train, val = data_io.split(dataset, config.validation_fraction, config.seed)
    oracle = oracle_loss_for(train, config.k) if config.oracle else None
    rows = []
    for scale in scales:
        eta0 = base.eta0 * scale
        losses, excesses, val_losses = [], [], []
        for r in range(config.repeats):
            cfg = config.with_overrides(**{"schedule.eta0": eta0, "schedule.gamma": base.gamma, "seed": config.seed + r})
            res = run_experiment(cfg, dataset=train, oracle_loss=oracle)
            losses.append(res.summary["final_loss"])
            if oracle is not None:
                excesses.append(res.summary["excess_pct"])
            if val is not None:
                val_losses.append(compression_loss(res.state, val.Y))
        rows.append({
            "scale": float(scale),
            "eta0": eta0,
            "repeats": config.repeats,
            "loss_mean": float(np.mean(losses)),
            "loss_std": float(np.std(losses)),
            "excess_mean": float(np.mean(excesses)) if excesses else None,
            "excess_std": float(np.std(excesses)) if excesses else None,
            "val_loss_mean": float(np.mean(val_losses)) if val_losses else None,
            "val_loss_std": float(np.std(val_losses)) if val_losses else None,
        })
    key = "val_loss_mean" if val is not None else "loss_mean"
    best = min(rows, key=lambda row: row[key])["scale"]
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_config_echo(config, out_dir)
        write_rows(os.path.join(out_dir, "sweep.csv"), SWEEP_HEADER, rows)
    return SweepResult(rows, best)


@dataclass
class DistributedResult:
    combined: LossTrace
    workers: LossTrace
    summary: dict
    state: object = None


def run_distributed(config, out_dir=None, dataset=None, oracle_loss=None):
    """Synchronous multi-worker run; writes trace.csv (combined model) and worker_trace.csv."""
    config.validate()
    if config.algorithm not in STREAMING_ALGOS:
        raise ConfigError("algorithm", "distributed runs need a streaming algorithm")
    sync = config.sync_config()
    sync.check_algorithm(config.algorithm)
    if dataset is None:
        dataset = load_dataset(config)
    _check_k(config, dataset)
    if oracle_loss is None and config.oracle:
        oracle_loss = oracle_loss_for(dataset, config.k)
    schedule = config.learning_schedule(dataset.d)
    sinks = []
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_config_echo(config, out_dir)
        sinks = [open(os.path.join(out_dir, name), "w", newline="") for name in ("trace.csv", "worker_trace.csv")]
    t0 = time.monotonic()
    try:
        res = run_synchronous(
            dataset.Y, sync, config.algorithm, schedule, config.seed,
            inverse_mode=config.inverse_mode, refresh_period=config.refresh_period, k=config.k,
            oracle_loss=oracle_loss,
            combined_sink=sinks[0] if sinks else None,
            worker_sink=sinks[1] if sinks else None,
        )
    finally:
        for s in sinks:
            s.close()
    wall = 1000.0 * (time.monotonic() - t0)
    final = res.combined.final
    summary = _summary(config, dataset, schedule, final.step, final.loss, oracle_loss, wall)
    if out_dir is not None:
        write_rows(os.path.join(out_dir, "summary.csv"), SUMMARY_HEADER, [summary])
    return DistributedResult(res.combined, res.workers, summary, res.state)
