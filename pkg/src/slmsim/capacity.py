"""Maximum batch sizes and per-replica memory partitioning."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import NonFitting, ValidationError, ZeroCapacity
from .hardware import SINGLE, DeviceSpec, ParallelSpec, usable_kv_bytes
from .model_catalog import ModelSpec, kv_bytes_per_token, weights_bytes

DEFAULT_CAP = 512


@dataclass(frozen=True)
class CapacityPlan:
    exact_batch: float
    pow2_batch: int
    kv_per_request: int
    pool: float
    cap: int
    weights: int = 0

    def blocks(self, block_size: int, kv_per_token: int) -> int:
        """Whole KV blocks that fit in the pool."""
        return int(self.pool // (block_size * kv_per_token))


def nearest_pow2(x: float) -> int:
    """Power of two nearest to ``x`` on a log scale.

    For ``2**k <= x < 2**(k+1)`` the result is ``2**(k+1)`` iff ``x`` is
    above the geometric mean ``2**(k + 0.5)``.
    """
    if x < 1:
        raise ValueError(f"x must be >= 1, got {x}")
    k = int(math.floor(math.log2(x)))
    # guard log2 rounding at exact powers
    if 2 ** (k + 1) <= x:
        k += 1
    elif 2**k > x:
        k -= 1
    lo = 2**k
    return 2 * lo if x > math.sqrt(lo * 2 * lo) else lo


def _plan(pool: float, kv_per_request: int, cap: int, weights: int, label: str) -> CapacityPlan:
    exact = pool / kv_per_request
    if exact < 1:
        raise ZeroCapacity(f"{label}: pool of {pool / 1e9:.3f} GB holds {exact:.3f} requests")
    return CapacityPlan(
        exact_batch=exact,
        pow2_batch=min(nearest_pow2(exact), 1 << (cap.bit_length() - 1)),
        kv_per_request=kv_per_request,
        pool=pool,
        cap=cap,
        weights=weights,
    )


def max_batch(
    model: ModelSpec,
    device: DeviceSpec,
    par: ParallelSpec = SINGLE,
    seq_len: int = 768,
    cap: int = DEFAULT_CAP,
) -> CapacityPlan:
    if seq_len <= 0:
        raise ValidationError("seq_len", "must be positive")
    pool = usable_kv_bytes(model, device, par)
    return _plan(pool, seq_len * kv_bytes_per_token(model), cap, weights_bytes(model), model.name)


def replica_partition(
    model: ModelSpec,
    device: DeviceSpec,
    n_replicas: int,
    seq_len: int,
    base_batch: int,
) -> list[CapacityPlan]:
    """Split one device's usable memory evenly over ``n_replicas`` engines.

    Every replica holds its own full copy of the weights; its batch cap is
    the single-device batch divided by the replica count.
    """
    if n_replicas < 1:
        raise ValidationError("n_replicas", "must be >= 1")
    share = device.usable_bytes / n_replicas
    weights = weights_bytes(model)
    if weights > share:
        raise NonFitting(
            f"{model.name}: weights {weights / 1e9:.2f} GB exceed the "
            f"{share / 1e9:.2f} GB share of {n_replicas} replicas"
        )
    cap = base_batch // n_replicas
    if cap < 1:
        raise ZeroCapacity(f"batch {base_batch} cannot be divided over {n_replicas} replicas")
    plan = _plan(share - weights, seq_len * kv_bytes_per_token(model), cap, weights, model.name)
    return [plan] * n_replicas
