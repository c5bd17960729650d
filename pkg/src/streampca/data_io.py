"""Loading, centering, splitting and synthesising datasets.

Everything is stored as a d x N matrix with one observation per column.
"""

import csv
import gzip
import logging
import math
import struct
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import BadMagic, BadSpec, ParseError, RaggedRows, TruncatedFile

log = logging.getLogger(__name__)

IDX3_MAGIC = 0x00000803


@dataclass(frozen=True)
class SyntheticSpec:
    d: int
    n: int
    spectrum: tuple
    seed: int = 0

    def __post_init__(self):
        spec = tuple(float(s) for s in np.asarray(self.spectrum, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "spectrum", spec)
        if self.d < 1 or self.n < 1:
            raise BadSpec(f"d and n must be positive, got d={self.d}, n={self.n}")
        if len(spec) != self.d:
            raise BadSpec(f"spectrum has {len(spec)} values for d={self.d}")
        if not all(math.isfinite(s) and s >= 0 for s in spec):
            raise BadSpec("spectrum values must be finite and nonnegative")
        if any(a < b for a, b in zip(spec, spec[1:])):
            raise BadSpec("spectrum must be sorted in descending order")


@dataclass(frozen=True)
class Dataset:
    Y: np.ndarray
    mean: np.ndarray = field(default=None)
    source: object = None
    seed: Optional[int] = None

    def __post_init__(self):
        Y = np.array(self.Y, dtype=np.float64, order="C")
        if Y.ndim != 2:
            raise ValueError(f"Y must be 2-D, got shape {Y.shape}")
        Y.setflags(write=False)
        object.__setattr__(self, "Y", Y)
        mean = np.zeros(Y.shape[0]) if self.mean is None else np.array(self.mean, dtype=np.float64)
        mean.setflags(write=False)
        object.__setattr__(self, "mean", mean)

    @property
    def d(self):
        return self.Y.shape[0]

    @property
    def n(self):
        return self.Y.shape[1]


def load_csv(path, has_header=False):
    """Read a numeric CSV, one observation per row.  Not centered."""
    rows = []
    width = None
    with open(path, newline="") as f:
        for r, row in enumerate(csv.reader(f), start=1):
            if has_header and r == 1:
                continue
            if not row or all(not cell.strip() for cell in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise RaggedRows(f"row has {len(row)} fields, expected {width}", r, len(row))
            vals = []
            for c, cell in enumerate(row, start=1):
                try:
                    # float() ignores locale, so ',' is never a decimal mark here
                    v = float(cell) if "_" not in cell else None
                except ValueError:
                    v = None
                if v is None or not math.isfinite(v):
                    raise ParseError(f"not a finite number: {cell!r}", r, c)
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise ParseError("no data rows", 0, 0)
    return Dataset(np.array(rows).T, source=str(path))


def _open_maybe_gzip(path):
    with open(path, "rb") as f:
        head = f.read(2)
    return gzip.open(path, "rb") if head == b"\x1f\x8b" else open(path, "rb")


def load_idx(images_path):
    """Read an IDX3 image file; each image becomes one column scaled to [0, 1]."""
    with _open_maybe_gzip(images_path) as f:
        raw = f.read()
    if len(raw) < 4:
        raise TruncatedFile(f"{images_path}: {len(raw)} bytes, no header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != IDX3_MAGIC:
        raise BadMagic(f"{images_path}: magic 0x{magic:08x}, expected 0x{IDX3_MAGIC:08x}")
    if len(raw) < 16:
        raise TruncatedFile(f"{images_path}: header cut short")
    n, rows, cols = struct.unpack(">III", raw[4:16])
    need = n * rows * cols
    if len(raw) - 16 < need:
        raise TruncatedFile(f"{images_path}: header declares {need} pixel bytes, found {len(raw) - 16}")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=need, offset=16)
    Y = pixels.reshape(n, rows * cols).T / 255.0
    return Dataset(Y, source=str(images_path))


def center(dataset):
    """Subtract the column mean; the accumulated mean is kept in ``mean``."""
    mu = dataset.Y.mean(axis=1)
    return replace(dataset, Y=dataset.Y - mu[:, None], mean=dataset.mean + mu)


def synthetic_gaussian(spec):
    """N(0, Q diag(spectrum) Q^T) samples with a seeded random orthogonal Q, re-centered."""
    if not isinstance(spec, SyntheticSpec):
        raise BadSpec(f"expected a SyntheticSpec, got {type(spec).__name__}")
    rng = np.random.default_rng(spec.seed)
    Q, R = np.linalg.qr(rng.standard_normal((spec.d, spec.d)))
    Q *= np.where(np.diag(R) < 0, -1.0, 1.0)
    Z = rng.standard_normal((spec.d, spec.n))
    Y = Q @ (np.sqrt(np.asarray(spec.spectrum))[:, None] * Z)
    return center(Dataset(Y, source=spec, seed=spec.seed))


def split(dataset, fraction, seed):
    """Seeded disjoint split into ceil((1-f) N) training and the rest for validation."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    n = dataset.n
    # the slack absorbs rounding such as (1 - 0.1) * 100 = 90.00000000000001
    n_train = math.ceil((1.0 - fraction) * n - 1e-9)
    idx = np.random.default_rng(seed).permutation(n)
    train, val = np.sort(idx[:n_train]), np.sort(idx[n_train:])
    return (
        replace(dataset, Y=dataset.Y[:, train], seed=seed),
        replace(dataset, Y=dataset.Y[:, val], seed=seed),
    )


def shard(order, m):
    """Cut a permutation into m equal shards; the len(order) mod m tail is dropped."""
    n = len(order)
    if not 1 <= m <= n:
        raise ValueError(f"cannot cut {n} samples into {m} shards")
    size = n // m
    if n % m:
        log.info("dropping %d samples to keep %d equal shards", n % m, m)
    return [np.asarray(order[i * size : (i + 1) * size]) for i in range(m)]
