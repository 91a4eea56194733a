"""Request traces: closed-loop bursts, Poisson arrivals, CSV replay."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError

INF = math.inf


class State(str, Enum):
    QUEUED = "Queued"
    PREFILLING = "Prefilling"
    RUNNING = "Running"
    PREEMPTED = "Preempted"
    DONE = "Done"


@dataclass
class Request:
    id: int
    arrival: float
    input_len: int
    output_len: int
    generated: int = 0
    state: State = State.QUEUED
    t_first_sched: float | None = None
    t_done: float | None = None
    preemptions: int = 0
    blocks: int = field(default=0, repr=False)

    @property
    def context_len(self) -> int:
        return self.input_len + self.generated

    @property
    def latency(self) -> float:
        return self.t_done - self.arrival

    def fresh(self) -> "Request":
        """Copy with the lifecycle reset, so traces can be reused across runs."""
        return Request(self.id, self.arrival, self.input_len, self.output_len)


@dataclass(frozen=True)
class WorkloadSpec:
    n_requests: int = 500
    input_len: int = 512
    output_len: int = 256
    arrival_rate: float = INF
    seed: int = 0

    def __post_init__(self):
        if self.n_requests < 0:
            raise ValidationError("n_requests", "must be >= 0")
        if self.input_len < 1 or self.output_len < 1:
            raise ValidationError("input_len/output_len", "lengths must be >= 1")
        if not self.arrival_rate > 0:
            raise ValidationError("arrival_rate", "must be > 0 or inf")

    @property
    def seq_len(self) -> int:
        return self.input_len + self.output_len


def synthetic(spec: WorkloadSpec) -> list[Request]:
    """Fixed-length requests, all at t=0 for an infinite rate, otherwise
    with i.i.d. exponential gaps of mean ``1/arrival_rate``."""
    n = spec.n_requests
    if math.isinf(spec.arrival_rate):
        arrivals = [0.0] * n
    else:
        rng = np.random.default_rng(spec.seed)
        gaps = rng.exponential(1.0 / spec.arrival_rate, size=n)
        arrivals = np.cumsum(gaps).tolist()
    return [Request(i, a, spec.input_len, spec.output_len) for i, a in enumerate(arrivals)]


def _parse_row(row, lineno):
    if len(row) != 3:
        raise ParseError(lineno, f"expected 3 fields (arrival,input_len,output_len), got {len(row)}")
    try:
        arrival = float(row[0])
        input_len = int(row[1])
        output_len = int(row[2])
    except ValueError as exc:
        raise ParseError(lineno, str(exc)) from None
    if not math.isfinite(arrival) or arrival < 0:
        raise ValidationError(f"row {lineno}: arrival", f"must be a finite non-negative number, got {row[0]}")
    if input_len < 1:
        raise ValidationError(f"row {lineno}: input_len", f"must be >= 1, got {input_len}")
    if output_len < 1:
        raise ValidationError(f"row {lineno}: output_len", f"must be >= 1, got {output_len}")
    return arrival, input_len, output_len


def load_trace(path) -> list[Request]:
    """Read ``arrival_seconds,input_len,output_len`` rows (header optional).

    Request ids follow file order; the result is sorted by arrival, then id.
    """
    requests = []
    with Path(path).open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if lineno == 1 and row[0].strip().lower().startswith("arrival"):
                continue
            arrival, input_len, output_len = _parse_row([c.strip() for c in row], lineno)
            requests.append(Request(len(requests), arrival, input_len, output_len))
    requests.sort(key=lambda r: (r.arrival, r.id))
    return requests


def write_trace(path, requests):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["arrival_seconds", "input_len", "output_len"])
        for r in requests:
            writer.writerow([repr(r.arrival), r.input_len, r.output_len])
