import csv
import json
import shutil
from pathlib import Path

import pytest

from slmsim import engine
from slmsim.cli import main, read_sweep_csv
from slmsim.sweep import pareto_frontier

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL = """
[target]
models = ["OPT-125M", "OPT-1.3B"]

[workload]
n_requests = 24
input_len = 64
output_len = 16

[engine]
max_batch = 16

[sweep]
caps = [1, 2, 4, 8]

[replication]
r_max = 2
host_overhead = 0.002

[output]
formats = ["csv", "json", "svg"]
"""


def write_config(tmp_path, text=SMALL, name="small.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_plan_reproduces_capacity_table(tmp_path, capsys):
    cfg = CONFIGS / "opt-family.toml"
    assert main(["plan", "--config", str(cfg), "--output-dir", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "plan.csv")
    single = {r["model"]: int(r["pow2_batch"]) for r in rows if r["replicas"] == "1" and r["tp_degree"] == "1"}
    assert single == {"OPT-125M": 512, "OPT-1.3B": 256, "OPT-2.7B": 128, "OPT-6.7B": 64, "OPT-13B": 16}
    assert (tmp_path / "plan.json").exists() and (tmp_path / "plan.svg").exists()
    assert "OPT-13B 16" in capsys.readouterr().out


def test_simulate_empty_workload(tmp_path):
    cfg = write_config(tmp_path, '[target]\nmodels = ["OPT-125M"]\n[workload]\nn_requests = 0\n')
    assert main(["simulate", "--config", str(cfg), "--output-dir", str(tmp_path)]) == 0
    m = json.loads((tmp_path / "simulate.json").read_text())["metrics"]["OPT-125M"]
    assert m["completed"] == 0 and m["throughput_rps"] == 0 and m["makespan"] == 0
    assert read_rows(tmp_path / "requests_OPT-125M.csv") == []


def test_simulate_trace_config(tmp_path):
    for name in ("poisson-trace.toml", "sample_trace.csv"):
        shutil.copy(CONFIGS / name, tmp_path / name)
    assert main(["simulate", "--config", str(tmp_path / "poisson-trace.toml"), "--output-dir", str(tmp_path / "o"), "--check"]) == 0
    rows = read_rows(tmp_path / "o" / "requests_OPT-1.3B.csv")
    assert len(rows) == 60 and all(float(r["t_done"]) >= float(r["arrival"]) for r in rows)


def test_pareto_drops_dominated_row(tmp_path, capsys):
    src = tmp_path / "s.csv"
    src.write_text(
        "config_label,batch_cap,tp_degree,throughput_rps,latency_mean_s\n"
        "a,1,1,10.0,1.0\n"
        "b,2,1,20.0,2.0\n"
        "c,4,1,15.0,3.0\n"
    )
    assert main(["pareto", str(src)]) == 0
    assert [r["config_label"] for r in read_rows(tmp_path / "s_frontier.csv")] == ["a", "b"]
    assert "2 lie on the Pareto frontier" in capsys.readouterr().out


def test_sweep_csv_round_trips_to_frontier(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(cfg), "--output-dir", str(out)]) == 0
    points = read_sweep_csv(out / "sweep.csv")
    assert len(points) == 8
    payload = json.loads((out / "sweep.json").read_text())
    assert payload["schema_version"] == 1
    for model, front in payload["frontier"].items():
        recomputed = pareto_frontier([p for p in points if p.model == model])
        assert [r["config_label"] for r in front] == [p.config_label for p in recomputed]
        assert [r["throughput_rps"] for r in front] == [p.throughput_rps for p in recomputed]
    assert main(["pareto", str(out / "sweep.csv")]) == 0
    labels = [r["config_label"] for r in read_rows(out / "sweep_frontier.csv")]
    assert sorted(labels) == sorted(r["config_label"] for f in payload["frontier"].values() for r in f)


@pytest.mark.parametrize("command", ["plan", "simulate", "sweep", "replicate"])
def test_outputs_are_byte_identical(tmp_path, command):
    cfg = write_config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main([command, "--config", str(cfg), "--output-dir", str(out)]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir()) and names
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_replicate_rows(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["replicate", "--config", str(cfg), "--output-dir", str(tmp_path / "o")]) == 0
    rows = read_rows(tmp_path / "o" / "replicate.csv")
    assert [(r["model"], r["replicas"]) for r in rows] == [
        ("OPT-125M", "1"), ("OPT-125M", "2"), ("OPT-1.3B", "1"), ("OPT-1.3B", "2")
    ]
    assert all(r["status"] == "ok" and float(r["host_overhead_s"]) == 0.002 for r in rows)


def test_env_var_overrides_config_dir(tmp_path, monkeypatch):
    cfg = write_config(tmp_path)
    monkeypatch.setenv("SLMSIM_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["plan", "--config", str(cfg)]) == 0
    assert (tmp_path / "env" / "plan.csv").exists()
    # the flag still wins over the environment
    assert main(["plan", "--config", str(cfg), "--output-dir", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "plan.csv").exists()


def test_unknown_flag_exits_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["plan", "--bogus"])
    assert exc.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_subcommand_exits_1():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("[engine]\nmax_batch = 0\n", "[engine]"),
        ("[engine]\nturbo = true\n", "turbo"),
        ("[target]\nmodels = [\"GPT-9\"]\n", "GPT-9"),
        ("[workload]\nn_requests = 'many'\n", "n_requests"),
        ("[bogus]\n", "bogus"),
        ("not toml [", "invalid TOML"),
    ],
)
def test_config_errors_exit_1_and_name_the_file(tmp_path, capsys, text, fragment):
    cfg = write_config(tmp_path, text, "bad.toml")
    assert main(["plan", "--config", str(cfg), "--output-dir", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert str(cfg) in err and fragment in err


def test_missing_config_exits_1(tmp_path, capsys):
    assert main(["plan", "--config", str(tmp_path / "nope.toml")]) == 1
    assert "nope.toml" in capsys.readouterr().err


def test_request_that_never_fits_exits_1(tmp_path, capsys):
    cfg = write_config(tmp_path, '[target]\nmodels = ["OPT-13B"]\n[workload]\nn_requests = 1\ninput_len = 200000\n')
    assert main(["simulate", "--config", str(cfg), "--output-dir", str(tmp_path)]) == 1
    assert str(cfg) in capsys.readouterr().err


def test_simulation_error_exits_2(tmp_path, capsys, monkeypatch):
    monkeypatch.setattr(engine, "MAX_ITERATIONS", 3)
    cfg = write_config(tmp_path, '[target]\nmodels = ["OPT-125M"]\n[workload]\nn_requests = 4\n')
    assert main(["simulate", "--config", str(cfg), "--output-dir", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "simulation error" in err and str(cfg) in err


def test_bad_sweep_csv_exits_1(tmp_path, capsys):
    src = tmp_path / "bad.csv"
    src.write_text("config_label,batch_cap\nx,1\n")
    assert main(["pareto", str(src)]) == 1
    assert "throughput_rps" in capsys.readouterr().err
