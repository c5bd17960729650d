"""Loss traces: ordered (step, wall_ms, loss, excess_pct) records, CSV on disk."""

import csv
import time
from dataclasses import dataclass, field
from typing import Optional

TRACE_HEADER = ["step", "wall_ms", "loss", "excess_pct"]


def excess_pct(loss, oracle_loss):
    if oracle_loss is None:
        return None
    return 100.0 * (loss - oracle_loss) / oracle_loss


@dataclass
class LossRecord:
    step: int
    wall_ms: float
    loss: float
    excess_pct: Optional[float] = None


@dataclass
class LossTrace:
    """Append-only loss trace.

    When ``sink`` is an open text file each record is written and flushed
    as it is appended, so an interrupted run keeps everything it recorded.
    """

    oracle_loss: Optional[float] = None
    records: list = field(default_factory=list)
    sink: object = None
    _t0: float = field(default_factory=time.monotonic, repr=False)

    def __post_init__(self):
        if self.sink is not None:
            self._writer = csv.writer(self.sink, lineterminator="\n")
            self._writer.writerow(TRACE_HEADER)
            self.sink.flush()

    def restart_clock(self):
        self._t0 = time.monotonic()

    def append(self, step, loss, wall_ms=None):
        if self.records and step <= self.records[-1].step:
            raise ValueError(f"trace steps must increase: {step} after {self.records[-1].step}")
        if wall_ms is None:
            wall_ms = 1000.0 * (time.monotonic() - self._t0)
        rec = LossRecord(int(step), float(wall_ms), float(loss), excess_pct(loss, self.oracle_loss))
        self.records.append(rec)
        if self.sink is not None:
            self._writer.writerow(_row(rec))
            self.sink.flush()
        return rec

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def steps(self):
        return [r.step for r in self.records]

    @property
    def losses(self):
        return [r.loss for r in self.records]

    @property
    def final(self):
        return self.records[-1] if self.records else None

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(TRACE_HEADER)
            for rec in self.records:
                w.writerow(_row(rec))


def _row(rec):
    return [rec.step, f"{rec.wall_ms:.3f}", repr(rec.loss), "" if rec.excess_pct is None else repr(rec.excess_pct)]


def read_trace_csv(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    trace = LossTrace()
    for row in rows:
        ex = row["excess_pct"]
        trace.records.append(
            LossRecord(int(row["step"]), float(row["wall_ms"]), float(row["loss"]), float(ex) if ex else None)
        )
    return trace
