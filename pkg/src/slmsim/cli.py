"""Command-line entry point.

    slmsim plan      --config FILE   capacity table (max batch per model/TP/replicas)
    slmsim simulate  --config FILE   one engine run per target model
    slmsim sweep     --config FILE   batch-cap sweep, Pareto frontier, saturation cap
    slmsim replicate --config FILE   R = 1..r_max co-located replicas
    slmsim pareto    SWEEP_CSV       frontier of a previously written sweep CSV

Exit status: 0 on success, 1 on configuration or validation errors, 2 when
a simulation fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .capacity import max_batch, replica_partition
from .config import OUTPUT_ENV, load_config
from .engine import RECORD_FIELDS, record_rows, run
from .errors import ConfigError, NonFitting, OrderError, ParseError, SimulationError, ZeroCapacity
from .hardware import ParallelSpec
from .model_catalog import kv_bytes_per_token, weights_bytes
from .replication import host_overhead_for_fraction, simulate_replicated
from .sweep import (
    SweepPoint,
    batch_sweep,
    default_caps,
    frontier_by_model,
    output_length_sweep,
    saturation_point,
)

SCHEMA_VERSION = 1

PLAN_FIELDS = (
    "model", "tp_degree", "replicas", "weights_bytes", "kv_bytes_per_token", "seq_len",
    "pool_bytes", "exact_batch", "pow2_batch", "cap", "status",
)
SWEEP_FIELDS = (
    "model", "config_label", "batch_cap", "tp_degree", "throughput_rps", "tokens_per_s",
    "latency_mean_s", "latency_max_s", "bound_fraction",
)
REPLICATE_FIELDS = (
    "model", "replicas", "batch_cap", "host_overhead_s", "throughput_rps", "tokens_per_s",
    "latency_mean_s", "latency_mean_of_means_s", "latency_mean_overall_s", "latency_max_s",
    "makespan_s", "busy_fraction", "preemptions", "status",
)

log = logging.getLogger("slmsim")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return "" if value is None else value


def write_csv(path, fields, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_fmt(row.get(f)) for f in fields])
    return path


def write_json(path, payload):
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    return path


def _figures(cfg, plot, *args):
    formats = [f for f in cfg.formats if f in ("svg", "png")]
    if not formats:
        return []
    from . import report

    return getattr(report, plot)(*args, formats=formats)


def _outputs(cfg, name):
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    return cfg.output_dir / name


def _par(cfg, tp):
    return replace(cfg.parallel, tp_degree=tp)


def _safe(name):
    return "".join(c if c.isalnum() or c in "-._" else "_" for c in name)


# -- plan -------------------------------------------------------------------


def plan_rows(cfg):
    seq_len = cfg.capacity_seq_len()
    rows = []
    for model in cfg.models:
        base = {
            "model": model.name,
            "weights_bytes": weights_bytes(model),
            "kv_bytes_per_token": kv_bytes_per_token(model),
            "seq_len": seq_len,
        }
        single = None
        for tp in cfg.tp_degrees:
            row = {**base, "tp_degree": tp, "replicas": 1}
            try:
                p = max_batch(model, cfg.device, _par(cfg, tp), seq_len, cfg.cap)
            except (NonFitting, ZeroCapacity) as exc:
                row["status"] = type(exc).__name__
            else:
                row.update(pool_bytes=p.pool, exact_batch=p.exact_batch, pow2_batch=p.pow2_batch, cap=p.cap, status="ok")
                if tp == 1:
                    single = p
            rows.append(row)
        if single is None:
            continue
        for r in range(2, cfg.r_max + 1):
            row = {**base, "tp_degree": 1, "replicas": r}
            try:
                p = replica_partition(model, cfg.device, r, seq_len, single.pow2_batch)[0]
            except (NonFitting, ZeroCapacity) as exc:
                row["status"] = type(exc).__name__
            else:
                row.update(pool_bytes=p.pool, exact_batch=p.exact_batch, pow2_batch=p.pow2_batch, cap=p.cap, status="ok")
            rows.append(row)
    return rows


def cmd_plan(cfg):
    rows = plan_rows(cfg)
    files = []
    if "csv" in cfg.formats:
        files.append(write_csv(_outputs(cfg, "plan.csv"), PLAN_FIELDS, rows))
    if "json" in cfg.formats:
        files.append(write_json(_outputs(cfg, "plan.json"), {"command": "plan", "device": asdict(cfg.device), "rows": rows}))
    files += _figures(cfg, "plot_plan", rows, _outputs(cfg, "plan"))
    single = [f"{r['model']} {r['pow2_batch']}" for r in rows if r["replicas"] == 1 and r["tp_degree"] == 1 and r["status"] == "ok"]
    print(
        f"Planned {len(rows)} configurations on {cfg.device.name} "
        f"({cfg.device.usable_bytes / 1e9:g} GB usable, {cfg.capacity_seq_len()}-token budget, cap {cfg.cap}). "
        f"Single-device max batch: {', '.join(single) or 'none'}. Wrote {len(files)} files to {cfg.output_dir}."
    )
    return 0


# -- simulate ---------------------------------------------------------------


def cmd_simulate(cfg, check=False):
    trace = cfg.trace()
    results = {}
    files = []
    for model in cfg.models:
        res = run(model, cfg.device, cfg.parallel, cfg.engine, trace, check=check)
        results[model.name] = res.metrics.to_dict()
        if "csv" in cfg.formats:
            path = _outputs(cfg, f"requests_{_safe(model.name)}.csv")
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(RECORD_FIELDS)
                writer.writerows(record_rows(res.records))
            files.append(path)
    if "json" in cfg.formats:
        payload = {
            "command": "simulate",
            "engine": {**asdict(cfg.engine), "mode": cfg.engine.mode.value},
            "n_requests": len(trace),
            "metrics": results,
        }
        files.append(write_json(_outputs(cfg, "simulate.json"), payload))
    parts = [
        f"{name}: {m['throughput_rps']:.3f} req/s, {m['throughput_tps']:.0f} tok/s, "
        f"mean latency {m['latency_mean']:.3f} s, {m['preemption_count']} preemptions"
        for name, m in results.items()
    ]
    print(
        f"Simulated {len(trace)} requests in {cfg.engine.mode.value} mode with max_batch {cfg.engine.max_batch}. "
        + "; ".join(parts) + f". Wrote {len(files)} files to {cfg.output_dir}."
    )
    return 0


# -- sweep ------------------------------------------------------------------


def point_row(p: SweepPoint):
    return {
        "model": p.model,
        "config_label": p.config_label,
        "batch_cap": p.batch_cap,
        "tp_degree": p.tp_degree,
        "throughput_rps": p.throughput_rps,
        "tokens_per_s": p.tokens_per_s,
        "latency_mean_s": p.latency_mean,
        "latency_max_s": p.latency_max,
        "bound_fraction": p.bound_fraction,
    }


def read_sweep_csv(path) -> list[SweepPoint]:
    required = ("config_label", "batch_cap", "tp_degree", "throughput_rps", "latency_mean_s")
    points = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read sweep CSV: {exc.strerror}") from None
    with fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or ())]
        if missing:
            raise ParseError(1, f"{path}: missing column(s) {', '.join(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                points.append(
                    SweepPoint(
                        config_label=row["config_label"],
                        batch_cap=int(row["batch_cap"]),
                        tp_degree=int(row["tp_degree"]),
                        throughput_rps=float(row["throughput_rps"]),
                        latency_mean=float(row["latency_mean_s"]),
                        model=row.get("model") or "",
                        tokens_per_s=float(row.get("tokens_per_s") or 0.0),
                        latency_max=float(row.get("latency_max_s") or 0.0),
                        bound_fraction=float(row.get("bound_fraction") or 0.0),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise ParseError(lineno, f"{path}: {exc}") from None
    return points


def cmd_sweep(cfg):
    trace = cfg.trace()
    seq_len = cfg.capacity_seq_len(trace)
    points, failures, saturation = [], [], {}
    for model in cfg.models:
        for tp in cfg.tp_degrees:
            par = _par(cfg, tp)
            try:
                caps = cfg.sweep_caps or default_caps(model, cfg.device, par, seq_len, cfg.cap)
            except (NonFitting, ZeroCapacity) as exc:
                failures.append({"model": model.name, "tp_degree": tp, "batch_cap": None, "reason": str(exc)})
                continue
            failed = []
            pts = batch_sweep(model, cfg.device, par, trace, caps, cfg.engine, jobs=cfg.jobs, failures=failed)
            failures += [{"model": model.name, "tp_degree": tp, "batch_cap": c, "reason": r} for c, r in failed]
            points += pts
            try:
                saturation[f"{model.name}@tp{tp}"] = saturation_point(pts, cfg.epsilon)
            except OrderError:
                saturation[f"{model.name}@tp{tp}"] = None
    frontiers = frontier_by_model(points)
    rows = [point_row(p) for p in points]
    files = []
    if "csv" in cfg.formats:
        files.append(write_csv(_outputs(cfg, "sweep.csv"), SWEEP_FIELDS, rows))
    out_rows = []
    if cfg.output_lens:
        if cfg.workload is None:
            raise ConfigError(f"{cfg.path}: [sweep] output_lens: needs a synthetic [workload], not a trace")
        for model in cfg.models:
            pts = output_length_sweep(model, cfg.device, cfg.parallel, cfg.workload, cfg.output_lens, cfg.engine)
            out_rows += [{**point_row(p), "output_len": p.batch_cap} for p in pts]
        if "csv" in cfg.formats:
            fields = ("model", "config_label", "output_len", "tp_degree", "throughput_rps", "tokens_per_s",
                      "latency_mean_s", "latency_max_s", "bound_fraction")
            files.append(write_csv(_outputs(cfg, "sweep_output_len.csv"), fields, out_rows))
    if "json" in cfg.formats:
        payload = {
            "command": "sweep",
            "epsilon": cfg.epsilon,
            "n_points": len(points),
            "frontier": {m: [point_row(p) for p in f] for m, f in frontiers.items()},
            "saturation_cap": saturation,
            "failures": failures,
        }
        if out_rows:
            payload["output_length"] = out_rows
        files.append(write_json(_outputs(cfg, "sweep.json"), payload))
    files += _figures(cfg, "plot_sweep", points, frontiers, _outputs(cfg, "sweep"))
    sat = ", ".join(f"{k} {'none' if v is None else v}" for k, v in saturation.items())
    print(
        f"Swept {len(points)} points over {len(cfg.models)} model(s) and TP degrees {cfg.tp_degrees}"
        f"{f' ({len(failures)} failed)' if failures else ''}. "
        f"Saturation cap at epsilon={cfg.epsilon:g}: {sat or 'n/a'}. "
        f"Frontier sizes: {', '.join(f'{m} {len(f)}' for m, f in frontiers.items()) or 'n/a'}. "
        f"Wrote {len(files)} files to {cfg.output_dir}."
    )
    return 0


# -- pareto -----------------------------------------------------------------


def cmd_pareto(csv_path, output_dir=None):
    csv_path = Path(csv_path)
    points = read_sweep_csv(csv_path)
    frontiers = frontier_by_model(points)
    rows = [point_row(p) for f in frontiers.values() for p in f]
    out_dir = Path(output_dir or os.environ.get(OUTPUT_ENV) or csv_path.parent)
    out_dir.mkdir(parents=True, exist_ok=True)
    out = write_csv(out_dir / f"{csv_path.stem}_frontier.csv", SWEEP_FIELDS, rows)
    print(f"Read {len(points)} sweep points from {csv_path}; {len(rows)} lie on the Pareto frontier. Wrote {out}.")
    return 0


# -- replicate --------------------------------------------------------------


def cmd_replicate(cfg):
    trace = cfg.trace()
    seq_len = cfg.capacity_seq_len(trace)
    host = cfg.host_overhead if cfg.host_overhead is not None else cfg.device.host_overhead
    if cfg.host_overhead_fraction is not None:
        ref = cfg.catalog[cfg.calibration_model] if cfg.calibration_model else cfg.models[0]
        base = max_batch(ref, cfg.device, ParallelSpec(), seq_len, cfg.cap).pow2_batch
        host = host_overhead_for_fraction(ref, cfg.device, trace, cfg.engine, cfg.host_overhead_fraction, base)
    device = replace(cfg.device, host_overhead=host)
    rows, details = [], []
    for model in cfg.models:
        try:
            base = max_batch(model, device, ParallelSpec(), seq_len, cfg.cap).pow2_batch
        except (NonFitting, ZeroCapacity) as exc:
            rows.append({"model": model.name, "replicas": 1, "host_overhead_s": host, "status": type(exc).__name__})
            continue
        for r in range(1, cfg.r_max + 1):
            row = {"model": model.name, "replicas": r, "host_overhead_s": host}
            try:
                res = simulate_replicated(model, device, r, trace, cfg.engine, base_batch=base, seq_len=seq_len)
            except (NonFitting, ZeroCapacity) as exc:
                row["status"] = type(exc).__name__
                rows.append(row)
                continue
            m = res.aggregate
            row.update(
                batch_cap=res.plans[0].cap,
                throughput_rps=m.throughput_rps,
                tokens_per_s=m.throughput_tps,
                latency_mean_s=m.latency_mean,
                latency_mean_of_means_s=res.latency_mean_of_means,
                latency_mean_overall_s=res.latency_mean_overall,
                latency_max_s=m.latency_max,
                makespan_s=m.makespan,
                busy_fraction=m.busy_fraction,
                preemptions=m.preemption_count,
                status="ok",
            )
            rows.append(row)
            details.append({"model": model.name, "replicas": r, "per_replica": [x.to_dict() for x in res.per_replica]})
    files = []
    if "csv" in cfg.formats:
        files.append(write_csv(_outputs(cfg, "replicate.csv"), REPLICATE_FIELDS, rows))
    if "json" in cfg.formats:
        payload = {"command": "replicate", "host_overhead_s": host, "rows": rows, "replicas": details}
        files.append(write_json(_outputs(cfg, "replicate.json"), payload))
    files += _figures(cfg, "plot_replication", rows, _outputs(cfg, "replicate"))
    best = {}
    for row in rows:
        if row["status"] == "ok" and row["throughput_rps"] > best.get(row["model"], (0, 0))[1]:
            best[row["model"]] = (row["replicas"], row["throughput_rps"])
    print(
        f"Replicated {len(cfg.models)} model(s) up to R={cfg.r_max} with host overhead {host * 1e3:.3f} ms per iteration. "
        f"Best replica count by throughput: {', '.join(f'{m} R={r}' for m, (r, _) in best.items()) or 'none'}. "
        f"Wrote {len(files)} files to {cfg.output_dir}."
    )
    return 0


# -- entry point --------------------------------------------------------------


def _where(args, exc):
    source = getattr(args, "config", None) or getattr(args, "csv", None)
    msg = str(exc)
    return msg if source is None or msg.startswith(str(source)) else f"{source}: {msg}"


def build_parser():
    parser = _Parser(prog="slmsim", description="Serving simulator and capacity planner for small language models.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_config(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="TOML config file")
        p.add_argument("--output-dir", help=f"overrides ${OUTPUT_ENV} and [output] dir")
        return p

    with_config("plan", "maximum batch sizes per model, TP degree and replica count")
    p = with_config("simulate", "simulate one engine per target model")
    p.add_argument("--check", action="store_true", help="assert block-pool invariants after every iteration")
    p = with_config("sweep", "batch-cap sweep with Pareto frontier and saturation cap")
    p.add_argument("--epsilon", type=float, help="saturation threshold (default from config, 0.10)")
    p.add_argument("--jobs", type=int, help="parallel worker processes")
    with_config("replicate", "co-located replicas R = 1..r_max on one device")
    p = sub.add_parser("pareto", help="Pareto frontier of a sweep CSV")
    p.add_argument("csv", help="sweep CSV written by `slmsim sweep`")
    p.add_argument("--output-dir", help="where to write <name>_frontier.csv (default: next to the input)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "pareto":
            return cmd_pareto(args.csv, args.output_dir)
        cfg = load_config(args.config, args.output_dir)
        if args.command == "plan":
            return cmd_plan(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg, check=args.check)
        if args.command == "sweep":
            if args.epsilon is not None:
                if not args.epsilon > 0:
                    raise ConfigError("--epsilon must be > 0")
                cfg.epsilon = args.epsilon
            if args.jobs is not None:
                cfg.jobs = args.jobs
            return cmd_sweep(cfg)
        if args.command == "replicate":
            return cmd_replicate(cfg)
    except ConfigError as exc:
        print(f"slmsim: error: {_where(args, exc)}", file=sys.stderr)
        return 1
    except SimulationError as exc:
        print(f"slmsim: simulation error: {_where(args, exc)}", file=sys.stderr)
        return 2
    return 1  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
