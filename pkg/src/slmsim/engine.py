"""Discrete-event simulator of a serving engine with a paged KV cache.

A run is a sequence of iterations in virtual time. Each iteration is either
a prefill of newly admitted requests or one decode step over every running
request; its duration comes from :mod:`slmsim.costmodel`. Iterations are
split into a host phase and a device phase so several engines can share one
accelerator (see :func:`drive`).
"""

from __future__ import annotations

import heapq
import itertools
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from enum import Enum

from .costmodel import Bound, IterationCost, decode_iter_cost, prefill_cost_lengths
from .errors import ConfigError, LivelockError, SimulationError, ValidationError
from .hardware import SINGLE, DeviceSpec, ParallelSpec, usable_kv_bytes
from .model_catalog import ModelSpec, kv_bytes_per_token
from .workload import Request, State

MAX_ITERATIONS = 10_000_000


class BatchingMode(str, Enum):
    CONTINUOUS = "continuous"
    DYNAMIC = "dynamic"


@dataclass(frozen=True)
class EngineConfig:
    mode: BatchingMode = BatchingMode.CONTINUOUS
    max_batch: int = 256
    # Dynamic mode: how long a partial group waits for more arrivals
    dynamic_window: float = 0.0
    # free blocks that must remain after admitting a prompt
    admission_watermark_blocks: int = 1
    block_size: int = 16

    def __post_init__(self):
        object.__setattr__(self, "mode", BatchingMode(self.mode))
        if self.max_batch < 1:
            raise ValidationError("max_batch", "must be >= 1")
        if self.dynamic_window < 0:
            raise ValidationError("dynamic_window", "must be >= 0")
        if self.admission_watermark_blocks < 0:
            raise ValidationError("admission_watermark_blocks", "must be >= 0")
        if self.block_size < 1:
            raise ValidationError("block_size", "must be >= 1")


class BlockPool:
    """Counts fixed-size KV blocks held by each request."""

    def __init__(self, capacity_blocks: int, block_size: int = 16):
        self.capacity_blocks = capacity_blocks
        self.block_size = block_size
        self.used = 0
        self.peak = 0

    @property
    def free(self) -> int:
        return self.capacity_blocks - self.used

    def blocks_for(self, tokens: int) -> int:
        return -(-tokens // self.block_size)

    def allocate(self, req: Request, n: int):
        if n > self.free:
            raise SimulationError(f"block pool overflow: request {req.id} wants {n}, {self.free} free")
        req.blocks += n
        self.used += n
        self.peak = max(self.peak, self.used)

    def release(self, req: Request):
        self.used -= req.blocks
        req.blocks = 0


@dataclass
class Step:
    kind: str  # "prefill" | "decode"
    requests: list
    cost: IterationCost


@dataclass
class RunMetrics:
    throughput_rps: float = 0.0
    throughput_tps: float = 0.0
    latency_mean: float = 0.0
    latency_max: float = 0.0
    makespan: float = 0.0
    busy_fraction: float = 0.0
    preemption_count: int = 0
    completed: int = 0
    generated_tokens: int = 0
    # share of device time spent in compute-bound iterations
    compute_bound_fraction: float = 0.0
    # generated tokens per second of decode-iteration time
    decode_tps: float = 0.0
    iterations: int = 0
    device_time: float = 0.0
    peak_blocks: int = 0
    capacity_blocks: int = 0

    def to_dict(self):
        return asdict(self)


@dataclass
class RunResult:
    metrics: RunMetrics
    records: list = field(default_factory=list)


def capacity_blocks_for(model, device, par, block_size=16, pool_bytes=None) -> int:
    pool = usable_kv_bytes(model, device, par) if pool_bytes is None else pool_bytes
    return int(pool // (block_size * kv_bytes_per_token(model)))


class Engine:
    """One serving instance. Drive it with :func:`drive` or :func:`run`."""

    def __init__(
        self,
        model: ModelSpec,
        device: DeviceSpec,
        par: ParallelSpec,
        config: EngineConfig,
        trace,
        capacity_blocks: int,
        check: bool = False,
    ):
        self.model = model
        self.device = device
        self.par = par
        self.config = config
        self.check = check
        self.pool = BlockPool(capacity_blocks, config.block_size)
        self.requests = [r.fresh() for r in trace]
        for prev, cur in zip(self.requests, self.requests[1:]):
            if (prev.arrival, prev.id) > (cur.arrival, cur.id):
                raise ValidationError("trace", "must be sorted by arrival, then id")
        for r in self.requests:
            need = self.pool.blocks_for(r.input_len + r.output_len)
            if need > capacity_blocks:
                raise ConfigError(
                    f"request {r.id} needs {need} blocks for {r.input_len}+{r.output_len} tokens, "
                    f"pool has {capacity_blocks}"
                )
        self.waiting = deque(self.requests)
        self.running = []
        self.iterations = 0
        self.preemptions = 0
        self.device_time = 0.0
        self.compute_bound_time = 0.0
        self.decode_time = 0.0
        self._reserved = 0  # Dynamic mode: blocks promised to the current group

    @property
    def finished(self) -> bool:
        return not self.waiting and not self.running

    # -- scheduling -------------------------------------------------------

    def schedule(self, now: float) -> Step | None:
        """Pick the next iteration at time ``now``; None means idle."""
        if self.finished:
            return None
        self.iterations += 1
        if self.iterations > MAX_ITERATIONS:
            raise LivelockError(f"no completion after {MAX_ITERATIONS} iterations")
        if self.config.mode is BatchingMode.CONTINUOUS:
            admitted = self._admit_continuous(now)
        else:
            admitted = self._admit_dynamic(now) if not self.running else []
        if admitted:
            cost = prefill_cost_lengths(self.model, self.device, self.par, [r.context_len for r in admitted])
            return Step("prefill", admitted, cost)
        if self.running:
            return self._decode_step()
        self.iterations -= 1
        return None

    def _admit(self, req: Request, now: float):
        self.waiting.popleft()
        self.pool.allocate(req, self.pool.blocks_for(req.context_len))
        req.state = State.PREFILLING
        if req.t_first_sched is None:
            req.t_first_sched = now

    def _admit_continuous(self, now):
        admitted = []
        watermark = self.config.admission_watermark_blocks
        while self.waiting and len(self.running) + len(admitted) < self.config.max_batch:
            req = self.waiting[0]
            if req.arrival > now:
                break
            need = self.pool.blocks_for(req.context_len)
            alone = not self.running and not admitted
            if need + watermark <= self.pool.free or (alone and need <= self.pool.free):
                self._admit(req, now)
                admitted.append(req)
            else:
                break
        return admitted

    def _admit_dynamic(self, now):
        available = 0
        for req in self.waiting:
            if req.arrival > now or available == self.config.max_batch:
                break
            available += 1
        if not available:
            return []
        head = self.waiting[0]
        if available < self.config.max_batch and now < head.arrival + self.config.dynamic_window:
            return []
        # reserve whole sequences up front: a group never preempts
        group = []
        self._reserved = 0
        while self.waiting and len(group) < available:
            req = self.waiting[0]
            full = self.pool.blocks_for(req.input_len + req.output_len)
            if self._reserved + full > self.pool.capacity_blocks:
                break
            self._reserved += full
            self._admit(req, now)
            group.append(req)
        return group

    def _decode_step(self) -> Step:
        bs = self.pool.block_size
        needs = {r.id for r in self.running if r.context_len % bs == 0}
        while len(needs) > self.pool.free:
            victim = self.running.pop()
            needs.discard(victim.id)
            self._preempt(victim)
        cached = 0
        for r in self.running:
            if r.id in needs:
                self.pool.allocate(r, 1)
            cached += r.context_len + 1
        cost = decode_iter_cost(self.model, self.device, self.par, len(self.running), cached)
        return Step("decode", list(self.running), cost)

    def _preempt(self, req: Request):
        self.pool.release(req)
        req.state = State.PREEMPTED
        req.preemptions += 1
        self.preemptions += 1
        self.waiting.appendleft(req)

    def wake_time(self, now: float) -> float | None:
        """Earliest future time at which :meth:`schedule` may make progress."""
        if not self.waiting or self.running:
            return None
        head = self.waiting[0]
        if head.arrival > now:
            return head.arrival
        if self.config.mode is BatchingMode.DYNAMIC:
            deadline = head.arrival + self.config.dynamic_window
            later = next((r.arrival for r in self.waiting if r.arrival > now), math.inf)
            return min(deadline, later)
        raise SimulationError(f"engine stalled at t={now}: request {head.id} cannot be admitted")

    # -- completion -------------------------------------------------------

    def finish(self, step: Step, now: float):
        cost = step.cost
        self.device_time += cost.t_device
        if cost.bound is Bound.COMPUTE:
            self.compute_bound_time += cost.t_device
        if step.kind == "prefill":
            for r in step.requests:
                r.state = State.RUNNING
            self.running.extend(step.requests)
        else:
            self.decode_time += cost.t_total
            still = []
            for r in step.requests:
                r.generated += 1
                if r.generated == r.output_len:
                    r.state = State.DONE
                    r.t_done = now
                    self.pool.release(r)
                else:
                    still.append(r)
            self.running = still
            if not self.running:
                self._reserved = 0
        if self.check:
            self.check_invariants()

    def check_invariants(self):
        bs = self.pool.block_size
        held = 0
        for r in self.requests:
            held += r.blocks
            assert 0 <= r.generated <= r.output_len, r
            assert (r.state is State.DONE) == (r.generated == r.output_len), r
            if r.state in (State.RUNNING, State.PREFILLING):
                assert r.blocks == -(-r.context_len // bs), r
            else:
                assert r.blocks == 0, r
            if r.t_done is not None:
                assert r.arrival <= r.t_first_sched <= r.t_done, r
        assert held == self.pool.used <= self.pool.capacity_blocks

    # -- reporting --------------------------------------------------------

    def metrics(self) -> RunMetrics:
        return summarize(self.requests, [self])


def summarize(requests, engines) -> RunMetrics:
    """Metrics over ``requests`` served by ``engines`` (on one device)."""
    done = [r for r in requests if r.state is State.DONE]
    m = RunMetrics(
        preemption_count=sum(e.preemptions for e in engines),
        iterations=sum(e.iterations for e in engines),
        peak_blocks=sum(e.pool.peak for e in engines),
        capacity_blocks=sum(e.pool.capacity_blocks for e in engines),
    )
    if not done:
        return m
    start = min(r.arrival for r in requests)
    end = max(r.t_done for r in done)
    latencies = [r.latency for r in done]
    device_time = sum(e.device_time for e in engines)
    decode_time = sum(e.decode_time for e in engines)
    m.completed = len(done)
    m.device_time = device_time
    m.generated_tokens = sum(r.generated for r in requests)
    m.makespan = end - start
    m.latency_mean = math.fsum(latencies) / len(latencies)
    m.latency_max = max(latencies)
    if m.makespan > 0:
        m.throughput_rps = m.completed / m.makespan
        m.throughput_tps = m.generated_tokens / m.makespan
        m.busy_fraction = device_time / m.makespan
    if device_time > 0:
        m.compute_bound_fraction = sum(e.compute_bound_time for e in engines) / device_time
    if decode_time > 0:
        m.decode_tps = m.generated_tokens / decode_time
    return m


@dataclass
class DeviceLog:
    """Device-phase occupancy, recorded when driving with ``log=True``."""

    # (ready_time, start, end, engine index) in service order
    phases: list = field(default_factory=list)


_HOST_DONE, _DEVICE_DONE, _WAKE = 0, 1, 2


def drive(engines, log: bool = False) -> DeviceLog | None:
    """Run engines that share one device to completion.

    Each iteration spends ``t_host`` on the host (engines overlap freely)
    and then ``t_device`` on the accelerator, which serves one engine at a
    time in order of readiness, ties broken by engine index.
    """
    heap = []
    seq = itertools.count()
    in_flight = [None] * len(engines)
    ready = []
    device_busy = False
    device_log = DeviceLog() if log else None

    def push(t, kind, idx):
        heapq.heappush(heap, (t, next(seq), kind, idx))

    def start(idx, t):
        eng = engines[idx]
        step = eng.schedule(t)
        if step is None:
            wake = eng.wake_time(t)
            if wake is not None:
                push(wake, _WAKE, idx)
            return
        in_flight[idx] = step
        push(t + step.cost.t_host, _HOST_DONE, idx)

    for idx in range(len(engines)):
        start(idx, 0.0)

    while heap:
        now = heap[0][0]
        while heap and heap[0][0] == now:
            _, _, kind, idx = heapq.heappop(heap)
            if kind == _HOST_DONE:
                ready.append((now, idx))
            elif kind == _DEVICE_DONE:
                device_busy = False
                step, in_flight[idx] = in_flight[idx], None
                engines[idx].finish(step, now)
                start(idx, now)
            elif in_flight[idx] is None:
                start(idx, now)
        if not device_busy and ready:
            ready.sort()
            ready_time, idx = ready.pop(0)
            device_busy = True
            end = now + in_flight[idx].cost.t_device
            if device_log is not None:
                device_log.phases.append((ready_time, now, end, idx))
            push(end, _DEVICE_DONE, idx)

    for eng in engines:
        if not eng.finished:
            raise SimulationError("simulation ended with unfinished requests")
    return device_log


def run(
    model: ModelSpec,
    device: DeviceSpec,
    par: ParallelSpec = SINGLE,
    config: EngineConfig = EngineConfig(),
    trace=(),
    capacity_blocks: int | None = None,
    check: bool = False,
) -> RunResult:
    """Simulate one engine over ``trace`` and return metrics plus records."""
    if capacity_blocks is None:
        capacity_blocks = capacity_blocks_for(model, device, par, config.block_size)
    engine = Engine(model, device, par, config, list(trace), capacity_blocks, check=check)
    drive([engine])
    return RunResult(engine.metrics(), engine.requests)


RECORD_FIELDS = ("id", "arrival", "t_first_sched", "t_done", "input_len", "output_len", "preemptions")


def record_rows(records):
    for r in records:
        yield [r.id, repr(r.arrival), repr(r.t_first_sched), repr(r.t_done), r.input_len, r.output_len, r.preemptions]
