"""Several engine replicas co-located on one accelerator.

Each replica owns an equal slice of device memory and its own copy of the
weights. Host phases of different replicas overlap; device phases are
serialized first-come-first-serve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .capacity import max_batch, replica_partition
from .engine import Engine, EngineConfig, RunMetrics, drive, summarize
from .hardware import SINGLE, DeviceSpec
from .model_catalog import ModelSpec, kv_bytes_per_token


@dataclass
class ReplicatedResult:
    n_replicas: int
    # latency_mean is the largest per-replica mean latency
    aggregate: RunMetrics
    per_replica: list
    plans: list
    latency_mean_of_means: float = 0.0
    latency_mean_overall: float = 0.0
    records: list = field(default_factory=list)
    device_log: object = None


def split_round_robin(trace, n_replicas):
    slices = [[] for _ in range(n_replicas)]
    for i, req in enumerate(trace):
        slices[i % n_replicas].append(req)
    return slices


def _seq_len(trace):
    return max((r.input_len + r.output_len for r in trace), default=1)


def simulate_replicated(
    model: ModelSpec,
    device: DeviceSpec,
    n_replicas: int,
    trace,
    engine_config: EngineConfig = EngineConfig(),
    base_batch: int | None = None,
    seq_len: int | None = None,
    check: bool = False,
    log: bool = False,
) -> ReplicatedResult:
    """Serve ``trace`` with ``n_replicas`` engines sharing one device.

    ``base_batch`` is the single-device batch that gets divided among
    replicas; by default it is the power-of-two capacity for ``seq_len``.
    """
    trace = list(trace)
    seq_len = seq_len or _seq_len(trace)
    if base_batch is None:
        base_batch = max_batch(model, device, SINGLE, seq_len).pow2_batch
    plans = replica_partition(model, device, n_replicas, seq_len, base_batch)
    block_bytes = engine_config.block_size * kv_bytes_per_token(model)
    engines = []
    for plan, part in zip(plans, split_round_robin(trace, n_replicas)):
        config = replace(engine_config, max_batch=plan.cap)
        blocks = int(plan.pool // block_bytes)
        engines.append(Engine(model, device, SINGLE, config, part, blocks, check=check))
    device_log = drive(engines, log=log)

    per_replica = [e.metrics() for e in engines]
    records = sorted((r for e in engines for r in e.requests), key=lambda r: r.id)
    aggregate = summarize(records, engines)
    overall = aggregate.latency_mean
    served = [m for m in per_replica if m.completed]
    if served:
        aggregate.latency_mean = max(m.latency_mean for m in served)
    return ReplicatedResult(
        n_replicas=n_replicas,
        aggregate=aggregate,
        per_replica=per_replica,
        plans=plans,
        latency_mean_of_means=math.fsum(m.latency_mean for m in served) / len(served) if served else 0.0,
        latency_mean_overall=overall,
        records=records,
        device_log=device_log,
    )


def host_overhead_for_fraction(model, device, trace, engine_config=EngineConfig(), fraction=0.5, base_batch=None):
    """Host overhead that makes up ``fraction`` of an average single-replica
    iteration for this model and workload."""
    if not 0 <= fraction < 1:
        raise ValueError("fraction must be in [0, 1)")
    bare = replace(device, host_overhead=0.0)
    result = simulate_replicated(model, bare, 1, trace, engine_config, base_batch=base_batch)
    m = result.aggregate
    if not m.iterations:
        return 0.0
    mean_device = m.device_time / m.iterations
    return mean_device * fraction / (1 - fraction)
