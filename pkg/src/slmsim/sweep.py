"""Batch-cap sweeps, Pareto frontiers and saturation detection."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from itertools import groupby

from .capacity import max_batch
from .engine import EngineConfig, run
from .errors import OrderError, SlmsimError, ValidationError
from .hardware import DeviceSpec, ParallelSpec
from .model_catalog import ModelSpec
from .workload import WorkloadSpec, synthetic

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepPoint:
    config_label: str
    batch_cap: int
    tp_degree: int
    throughput_rps: float
    latency_mean: float
    model: str = ""
    tokens_per_s: float = 0.0
    latency_max: float = 0.0
    bound_fraction: float = 0.0


def pow2_caps(upper: int) -> list[int]:
    caps, c = [], 1
    while c <= upper:
        caps.append(c)
        c *= 2
    return caps


def default_caps(model, device, par, seq_len, cap=512):
    return pow2_caps(max_batch(model, device, par, seq_len, cap).pow2_batch)


def _one_point(args):
    model, device, par, trace, config, cap = args
    try:
        m = run(model, device, par, replace(config, max_batch=cap), trace).metrics
    except SlmsimError as exc:
        return cap, None, str(exc)
    point = SweepPoint(
        config_label=f"{model.name}@tp{par.tp_degree}/b{cap}",
        batch_cap=cap,
        tp_degree=par.tp_degree,
        throughput_rps=m.throughput_rps,
        latency_mean=m.latency_mean,
        model=model.name,
        tokens_per_s=m.throughput_tps,
        latency_max=m.latency_max,
        bound_fraction=m.compute_bound_fraction,
    )
    return cap, point, None


def batch_sweep(
    model: ModelSpec,
    device: DeviceSpec,
    par: ParallelSpec,
    trace,
    caps,
    engine_config: EngineConfig = EngineConfig(),
    jobs: int = 1,
    failures: list | None = None,
) -> list[SweepPoint]:
    """One full simulation per batch cap, returned in cap order.

    Caps whose run fails are left out; ``(cap, reason)`` pairs are appended
    to ``failures`` when given.
    """
    caps = sorted(caps)
    if not caps or caps[0] < 1:
        raise ValidationError("caps", "need at least one cap, all >= 1")
    trace = list(trace)
    work = [(model, device, par, trace, engine_config, c) for c in caps]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one_point, work))
    else:
        results = [_one_point(w) for w in work]
    points = []
    for cap, point, err in results:
        if point is None:
            log.warning("%s cap %d failed: %s", model.name, cap, err)
            if failures is not None:
                failures.append((cap, err))
        else:
            points.append(point)
    return points


def dominates(a: SweepPoint, b: SweepPoint) -> bool:
    """``a`` is at least as good on both axes and strictly better on one."""
    return (
        a.throughput_rps >= b.throughput_rps
        and a.latency_mean <= b.latency_mean
        and (a.throughput_rps > b.throughput_rps or a.latency_mean < b.latency_mean)
    )


def pareto_frontier(points) -> list[SweepPoint]:
    """Non-dominated points (max throughput, min latency), by latency.

    Exact ties are kept.
    """
    ordered = sorted(points, key=lambda p: p.latency_mean)
    frontier = []
    best = float("-inf")
    for _, group in groupby(ordered, key=lambda p: p.latency_mean):
        group = list(group)
        top = max(p.throughput_rps for p in group)
        if top > best:
            frontier.extend(p for p in group if p.throughput_rps == top)
            best = top
    return frontier


def saturation_point(points, epsilon: float = 0.10) -> int | None:
    """Smallest cap whose doubling improves throughput by less than ``epsilon``."""
    if epsilon <= 0:
        raise ValidationError("epsilon", "must be > 0")
    points = list(points)
    for a, b in zip(points, points[1:]):
        if b.batch_cap != 2 * a.batch_cap:
            raise OrderError(f"caps {a.batch_cap} -> {b.batch_cap} are not a doubling")
    for a, b in zip(points, points[1:]):
        if b.throughput_rps < (1 + epsilon) * a.throughput_rps:
            return a.batch_cap
    return None


def frontier_by_model(points) -> dict[str, list[SweepPoint]]:
    groups = {}
    for p in points:
        groups.setdefault(p.model, []).append(p)
    return {name: pareto_frontier(pts) for name, pts in groups.items()}


def output_length_sweep(
    model: ModelSpec,
    device: DeviceSpec,
    par: ParallelSpec,
    workload: WorkloadSpec,
    output_lens,
    engine_config: EngineConfig = EngineConfig(),
) -> list[SweepPoint]:
    """Vary the generation length at a fixed memory budget.

    ``batch_cap`` of each point holds the output length; the engine's own
    ``max_batch`` is kept, so memory decides how many requests run at once.
    """
    points = []
    for out_len in output_lens:
        spec = replace(workload, output_len=out_len)
        m = run(model, device, par, engine_config, synthetic(spec)).metrics
        points.append(
            SweepPoint(
                config_label=f"{model.name}@tp{par.tp_degree}/out{out_len}",
                batch_cap=out_len,
                tp_degree=par.tp_degree,
                throughput_rps=m.throughput_rps,
                latency_mean=m.latency_mean,
                model=model.name,
                tokens_per_s=m.throughput_tps,
                latency_max=m.latency_max,
                bound_fraction=m.compute_bound_fraction,
            )
        )
    return points
