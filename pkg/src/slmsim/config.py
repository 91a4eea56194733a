"""TOML configuration files.

Sections: ``[target]`` picks models and the device profile, ``[models.*]``
and ``[devices.*]`` extend the built-ins, and ``[parallel]``, ``[workload]``,
``[engine]``, ``[capacity]``, ``[sweep]``, ``[replication]``, ``[output]``
parameterize the subcommands. Unknown keys are rejected.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .capacity import DEFAULT_CAP
from .engine import EngineConfig
from .errors import ConfigError, SlmsimError
from .hardware import A100_40GB, DeviceSpec, ParallelSpec
from .model_catalog import ModelCatalog, ModelSpec
from .workload import INF, WorkloadSpec, load_trace, synthetic

OUTPUT_ENV = "SLMSIM_OUTPUT_DIR"
FORMATS = ("csv", "json", "svg", "png")

SECTIONS = {
    "target", "models", "devices", "parallel", "workload", "engine",
    "capacity", "sweep", "replication", "output",
}


@dataclass
class Config:
    path: Path
    catalog: ModelCatalog
    models: list
    device: DeviceSpec
    parallel: ParallelSpec = ParallelSpec()
    workload: WorkloadSpec | None = WorkloadSpec()
    trace_path: Path | None = None
    engine: EngineConfig = EngineConfig()
    seq_len: int | None = None
    cap: int = DEFAULT_CAP
    sweep_caps: list | None = None
    tp_degrees: list = field(default_factory=lambda: [1])
    epsilon: float = 0.10
    output_lens: list | None = None
    jobs: int = 1
    r_max: int = 3
    host_overhead: float | None = None
    host_overhead_fraction: float | None = None
    calibration_model: str | None = None
    output_dir: Path = Path("out")
    formats: tuple = ("csv", "json", "svg")

    def trace(self):
        if self.trace_path is not None:
            return load_trace(self.trace_path)
        return synthetic(self.workload)

    def capacity_seq_len(self, trace=None) -> int:
        if self.seq_len is not None:
            return self.seq_len
        if self.workload is not None:
            return self.workload.seq_len
        trace = self.trace() if trace is None else trace
        return max((r.input_len + r.output_len for r in trace), default=1)


class _Section:
    """Typed, checked access to one table of the config file."""

    def __init__(self, path, name, table):
        self.path = path
        self.name = name
        self.table = dict(table)
        self.seen = set()

    def error(self, key, message):
        where = f"[{self.name}] {key}" if key else f"[{self.name}]"
        return ConfigError(f"{self.path}: {where}: {message}")

    def get(self, key, kind, default=None):
        self.seen.add(key)
        if key not in self.table:
            return default
        value = self.table[key]
        try:
            return _coerce(value, kind)
        except (TypeError, ValueError) as exc:
            raise self.error(key, str(exc)) from None

    def done(self):
        extra = set(self.table) - self.seen
        if extra:
            raise self.error(", ".join(sorted(extra)), "unknown key")


def _coerce(value, kind):
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"expected an integer, got {value!r}")
        if isinstance(value, float) and not value.is_integer():
            raise ValueError(f"expected an integer, got {value!r}")
        return int(value)
    if kind is float:
        if isinstance(value, str) and value.strip().lower() in ("inf", "infinite", "infinity"):
            return INF
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"expected a number, got {value!r}")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise TypeError(f"expected a string, got {value!r}")
        return value
    if kind is list:
        if not isinstance(value, list):
            raise TypeError(f"expected a list, got {value!r}")
        return value
    raise AssertionError(kind)


def _int_list(section, key):
    values = section.get(key, list)
    if values is None:
        return None
    try:
        return [_coerce(v, int) for v in values]
    except (TypeError, ValueError) as exc:
        raise section.error(key, str(exc)) from None


def _model(path, name, table):
    s = _Section(path, f"models.{name}", table)
    try:
        spec = ModelSpec(
            name=name,
            n_params=s.get("n_params", int),
            n_layers=s.get("n_layers", int),
            n_heads=s.get("n_heads", int),
            head_dim=s.get("head_dim", int),
            hidden=s.get("hidden", int),
            bytes_per_value=s.get("bytes_per_value", int, 2),
        )
    except TypeError as exc:
        raise s.error("", f"missing architecture field ({exc})") from None
    except SlmsimError as exc:
        raise s.error("", str(exc)) from None
    s.done()
    return spec


def _device(path, name, table):
    s = _Section(path, f"devices.{name}", table)
    base = A100_40GB
    kwargs = {f.name: s.get(f.name, float, getattr(base, f.name)) for f in fields(DeviceSpec) if f.name != "name"}
    s.done()
    try:
        return DeviceSpec(name=name, **kwargs)
    except SlmsimError as exc:
        raise s.error("", str(exc)) from None


def load_config(path, output_dir=None) -> Config:
    """Parse and validate a config file.

    ``output_dir`` (e.g. from a CLI flag) beats ``$SLMSIM_OUTPUT_DIR``,
    which beats ``[output] dir``.
    """
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from None
    unknown = set(raw) - SECTIONS
    if unknown:
        raise ConfigError(f"{path}: unknown section(s): {', '.join(sorted(unknown))}")

    catalog = ModelCatalog(_model(path, name, t) for name, t in raw.get("models", {}).items())
    devices = {A100_40GB.name: A100_40GB}
    for name, t in raw.get("devices", {}).items():
        devices[name] = _device(path, name, t)

    target = _Section(path, "target", raw.get("target", {}))
    names = target.get("models", list, [m.name for m in catalog])
    device_name = target.get("device", str, A100_40GB.name)
    target.done()
    try:
        models = [catalog[n] for n in names]
    except SlmsimError as exc:
        raise target.error("models", str(exc)) from None
    if device_name not in devices:
        raise target.error("device", f"unknown device profile {device_name!r}")

    cfg = Config(path=path, catalog=catalog, models=models, device=devices[device_name])

    s = _Section(path, "parallel", raw.get("parallel", {}))
    default_par = ParallelSpec()
    try:
        cfg.parallel = ParallelSpec(
            tp_degree=s.get("tp_degree", int, 1),
            link_bw=s.get("link_bw", float, default_par.link_bw),
            comm_base_latency=s.get("comm_base_latency", float, default_par.comm_base_latency),
        )
    except SlmsimError as exc:
        raise s.error("", str(exc)) from None
    s.done()

    s = _Section(path, "workload", raw.get("workload", {}))
    trace = s.get("trace", str)
    if trace is not None:
        if set(s.table) - {"trace"}:
            raise s.error("trace", "give either a trace path or a synthetic workload, not both")
        trace_path = Path(trace)
        cfg.trace_path = trace_path if trace_path.is_absolute() else path.parent / trace_path
        cfg.workload = None
    else:
        d = WorkloadSpec()
        try:
            cfg.workload = WorkloadSpec(
                n_requests=s.get("n_requests", int, d.n_requests),
                input_len=s.get("input_len", int, d.input_len),
                output_len=s.get("output_len", int, d.output_len),
                arrival_rate=s.get("arrival_rate", float, d.arrival_rate),
                seed=s.get("seed", int, d.seed),
            )
        except SlmsimError as exc:
            raise s.error("", str(exc)) from None
    s.done()

    s = _Section(path, "engine", raw.get("engine", {}))
    d = EngineConfig()
    try:
        cfg.engine = EngineConfig(
            mode=s.get("mode", str, d.mode.value),
            max_batch=s.get("max_batch", int, d.max_batch),
            dynamic_window=s.get("dynamic_window", float, d.dynamic_window),
            admission_watermark_blocks=s.get("admission_watermark_blocks", int, d.admission_watermark_blocks),
            block_size=s.get("block_size", int, d.block_size),
        )
    except ValueError as exc:
        raise s.error("mode", str(exc)) from None
    except SlmsimError as exc:
        raise s.error("", str(exc)) from None
    s.done()

    s = _Section(path, "capacity", raw.get("capacity", {}))
    cfg.seq_len = s.get("seq_len", int)
    cfg.cap = s.get("cap", int, DEFAULT_CAP)
    s.done()
    if cfg.seq_len is not None and cfg.seq_len < 1:
        raise ConfigError(f"{path}: [capacity] seq_len: must be >= 1")
    if cfg.cap < 1:
        raise ConfigError(f"{path}: [capacity] cap: must be >= 1")

    s = _Section(path, "sweep", raw.get("sweep", {}))
    cfg.sweep_caps = _int_list(s, "caps")
    cfg.tp_degrees = _int_list(s, "tp_degrees") or [cfg.parallel.tp_degree]
    cfg.epsilon = s.get("epsilon", float, 0.10)
    cfg.output_lens = _int_list(s, "output_lens")
    cfg.jobs = s.get("jobs", int, 1)
    s.done()
    if cfg.sweep_caps is not None and (not cfg.sweep_caps or min(cfg.sweep_caps) < 1):
        raise s.error("caps", "need at least one cap, all >= 1")
    if min(cfg.tp_degrees) < 1:
        raise s.error("tp_degrees", "must all be >= 1")
    if not cfg.epsilon > 0:
        raise s.error("epsilon", "must be > 0")

    s = _Section(path, "replication", raw.get("replication", {}))
    cfg.r_max = s.get("r_max", int, 3)
    cfg.host_overhead = s.get("host_overhead", float)
    cfg.host_overhead_fraction = s.get("host_overhead_fraction", float)
    cfg.calibration_model = s.get("calibration_model", str)
    s.done()
    if cfg.r_max < 1:
        raise s.error("r_max", "must be >= 1")
    if cfg.host_overhead is not None and cfg.host_overhead_fraction is not None:
        raise s.error("host_overhead", "give host_overhead or host_overhead_fraction, not both")
    if cfg.host_overhead_fraction is not None and not 0 <= cfg.host_overhead_fraction < 1:
        raise s.error("host_overhead_fraction", "must be in [0, 1)")
    if cfg.calibration_model is not None and cfg.calibration_model not in catalog:
        raise s.error("calibration_model", f"unknown model {cfg.calibration_model!r}")

    s = _Section(path, "output", raw.get("output", {}))
    out = s.get("dir", str, "out")
    formats = s.get("formats", list, list(cfg.formats))
    s.done()
    bad = [f for f in formats if f not in FORMATS]
    if bad:
        raise s.error("formats", f"unsupported format(s) {bad}; choose from {list(FORMATS)}")
    cfg.formats = tuple(formats)
    cfg.output_dir = Path(output_dir or os.environ.get(OUTPUT_ENV) or out)
    return cfg
