"""Deterministic serving simulator and capacity planner for small language models."""

from .capacity import CapacityPlan, max_batch, nearest_pow2, replica_partition
from .costmodel import (
    Bound,
    IterationCost,
    asymptotic_token_throughput,
    decode_iter_cost,
    prefill_cost,
    prefill_cost_lengths,
)
from .engine import BatchingMode, BlockPool, Engine, EngineConfig, RunMetrics, RunResult, drive, run
from .errors import (
    ConfigError,
    InvalidBatch,
    LivelockError,
    NonFitting,
    OrderError,
    ParseError,
    SimulationError,
    SlmsimError,
    ValidationError,
    ZeroCapacity,
)
from .hardware import A100_40GB, SINGLE, DeviceSpec, ParallelSpec, usable_kv_bytes
from .model_catalog import (
    BUILTIN_MODELS,
    OPT_1_3B,
    OPT_2_7B,
    OPT_6_7B,
    OPT_13B,
    OPT_125M,
    ModelCatalog,
    ModelSpec,
    flops_per_token,
    kv_bytes_per_token,
    weights_bytes,
)
from .replication import ReplicatedResult, host_overhead_for_fraction, simulate_replicated, split_round_robin
from .sweep import SweepPoint, batch_sweep, output_length_sweep, pareto_frontier, saturation_point
from .workload import INF, Request, State, WorkloadSpec, load_trace, synthetic

__version__ = "0.1.0"
