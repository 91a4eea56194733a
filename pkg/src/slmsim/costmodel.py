"""Roofline iteration-time model.

An iteration reads the weights once plus the KV cache of every request in
the batch. Its device time is the larger of memory time and compute time;
tensor-parallel collectives and a fixed host overhead are added on top.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import InvalidBatch, ValidationError
from .hardware import SINGLE, DeviceSpec, ParallelSpec
from .model_catalog import ModelSpec, flops_per_token, kv_bytes_per_token, weights_bytes


class Bound(str, Enum):
    MEMORY_IO = "MemoryIO"
    COMPUTE = "Compute"


@dataclass(frozen=True)
class IterationCost:
    t_mem: float
    t_comp: float
    t_comm: float
    t_host: float
    flops: int
    bytes_moved: int

    @property
    def t_device(self) -> float:
        """Time the accelerator is occupied (everything but host overhead)."""
        return max(self.t_mem, self.t_comp) + self.t_comm

    @property
    def t_total(self) -> float:
        return self.t_device + self.t_host

    @property
    def bound(self) -> Bound:
        return Bound.COMPUTE if self.t_comp > self.t_mem else Bound.MEMORY_IO

    @property
    def arithmetic_intensity(self) -> float:
        return self.flops / self.bytes_moved


def comm_time(model: ModelSpec, par: ParallelSpec, tokens: int) -> float:
    """Two activation all-reduces per layer over ``tokens`` rows."""
    if par.tp_degree == 1:
        return 0.0
    per_collective = par.comm_base_latency + tokens * model.hidden * model.bytes_per_value / par.link_bw
    return 2 * model.n_layers * per_collective


def _compose(model, device, par, flops, bytes_moved, tokens) -> IterationCost:
    d = par.tp_degree
    return IterationCost(
        t_mem=bytes_moved / (d * device.mem_bw),
        t_comp=flops / (d * device.peak_flops),
        t_comm=comm_time(model, par, tokens),
        t_host=device.host_overhead,
        flops=flops,
        bytes_moved=bytes_moved,
    )


def decode_iter_cost(
    model: ModelSpec,
    device: DeviceSpec,
    par: ParallelSpec,
    batch: int,
    cached_tokens: int,
) -> IterationCost:
    """Cost of one decode step for ``batch`` requests.

    ``cached_tokens`` is the total context across the batch, including the
    token being produced (its KV write is folded into the read volume).
    Because the attention term is linear in context length, using the
    batch total gives the same FLOPs as summing exact per-request lengths.
    """
    if batch < 1:
        raise InvalidBatch(f"batch must be >= 1, got {batch}")
    if cached_tokens < batch:
        raise ValidationError("cached_tokens", "must be at least one token per request")
    # == batch * flops_per_token(model, cached_tokens / batch), kept integral
    flops = batch * flops_per_token(model, 0) + 6 * model.n_layers * model.attn_width * cached_tokens
    bytes_moved = weights_bytes(model) + cached_tokens * kv_bytes_per_token(model)
    return _compose(model, device, par, flops, bytes_moved, batch)


def prefill_cost_lengths(model, device, par, prompt_lens) -> IterationCost:
    """Prefill of a group of prompts with individual lengths."""
    if not prompt_lens:
        raise InvalidBatch("prefill needs at least one request")
    tokens = sum(prompt_lens)
    flops = sum(p * flops_per_token(model, p) for p in prompt_lens)
    bytes_moved = weights_bytes(model) + tokens * kv_bytes_per_token(model)
    return _compose(model, device, par, flops, bytes_moved, tokens)


def prefill_cost(model, device, par, batch: int, prompt_len: int) -> IterationCost:
    if batch < 1:
        raise InvalidBatch(f"batch must be >= 1, got {batch}")
    if prompt_len < 1:
        raise ValidationError("prompt_len", "must be >= 1")
    return prefill_cost_lengths(model, device, par, [prompt_len] * batch)


def asymptotic_token_throughput(
    model: ModelSpec, device: DeviceSpec, par: ParallelSpec = SINGLE, seq_len: int = 768
) -> float:
    """Decode tokens/s as batch size grows without bound.

    Weight reads amortize away, leaving the KV stream (or compute, if that
    is tighter) as the ceiling.
    """
    if seq_len < 1:
        raise ValidationError("seq_len", "must be >= 1")
    d = par.tp_degree
    bandwidth_ceiling = d * device.mem_bw / (seq_len * kv_bytes_per_token(model))
    compute_ceiling = d * device.peak_flops / flops_per_token(model, seq_len)
    return min(bandwidth_ceiling, compute_ceiling)
