"""Accelerator envelope and tensor-parallel deployment shape."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import NonFitting, ValidationError
from .model_catalog import ModelSpec, weights_bytes


@dataclass(frozen=True)
class DeviceSpec:
    """Memory, bandwidth and compute limits of one accelerator.

    ``host_overhead`` is a fixed CPU-side cost (seconds) paid once per
    engine iteration, independent of batch size.
    """

    name: str = "a100-40gb"
    hbm_bytes: float = 40e9
    mem_bw: float = 1.555e12
    # public A100 dense FP16 datasheet value; not measured
    peak_flops: float = 312e12
    usable_fraction: float = 0.9
    host_overhead: float = 0.0

    def __post_init__(self):
        for field in ("hbm_bytes", "mem_bw", "peak_flops"):
            if getattr(self, field) <= 0:
                raise ValidationError(field, "must be positive")
        if not 0 < self.usable_fraction <= 1:
            raise ValidationError("usable_fraction", "must be in (0, 1]")
        if self.host_overhead < 0:
            raise ValidationError("host_overhead", "must be non-negative")

    @property
    def usable_bytes(self) -> float:
        return self.hbm_bytes * self.usable_fraction

    @property
    def ridge_point(self) -> float:
        return self.peak_flops / self.mem_bw


@dataclass(frozen=True)
class ParallelSpec:
    """Tensor-parallel degree and collective-communication constants.

    The link constants are uncalibrated defaults chosen to be NVLink-like;
    they only matter when ``tp_degree > 1``.
    """

    tp_degree: int = 1
    link_bw: float = 100e9
    comm_base_latency: float = 40e-6

    def __post_init__(self):
        if self.tp_degree < 1:
            raise ValidationError("tp_degree", "must be >= 1")
        if self.tp_degree > 1 and (self.link_bw <= 0 or self.comm_base_latency < 0):
            raise ValidationError("link_bw", "link parameters must be positive when tp_degree > 1")


A100_40GB = DeviceSpec()
SINGLE = ParallelSpec()


def usable_kv_bytes(model: ModelSpec, device: DeviceSpec, par: ParallelSpec = SINGLE) -> float:
    """KV-cache pool of the whole TP group, after the (sharded) weights."""
    total = par.tp_degree * device.usable_bytes
    weights = weights_bytes(model)
    if weights > total:
        raise NonFitting(
            f"{model.name}: weights {weights / 1e9:.2f} GB exceed "
            f"{total / 1e9:.2f} GB usable at tp_degree={par.tp_degree}"
        )
    return total - weights
