import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from slmsim.engine import EngineConfig, run
from slmsim.errors import OrderError, ValidationError
from slmsim.hardware import A100_40GB, SINGLE, ParallelSpec
from slmsim.model_catalog import OPT_13B, OPT_125M
from slmsim.sweep import (
    SweepPoint,
    batch_sweep,
    default_caps,
    dominates,
    pareto_frontier,
    pow2_caps,
    saturation_point,
)
from slmsim.workload import Request


def pt(tput, lat, cap=1, label=None):
    return SweepPoint(label or f"p{tput}-{lat}", cap, 1, tput, lat)


def brute_force_frontier(points):
    return [p for p in points if not any(dominates(q, p) for q in points if q is not p)]


def test_single_point():
    p = pt(1.0, 1.0)
    assert pareto_frontier([p]) == [p]


def test_strict_domination():
    a, b = pt(10, 1), pt(9, 2)
    assert pareto_frontier([b, a]) == [a]


def test_ties_kept():
    a, b = pt(5, 1, label="a"), pt(5, 1, label="b")
    assert pareto_frontier([a, b]) == [a, b]


def test_same_latency_lower_throughput_dropped():
    assert pareto_frontier([pt(5, 1), pt(4, 1)]) == [pt(5, 1)]


def test_frontier_matches_brute_force_random():
    rng = random.Random(0)
    for _ in range(20):
        pts = [pt(rng.random(), rng.random(), label=str(i)) for i in range(200)]
        assert sorted(pareto_frontier(pts), key=id) == sorted(brute_force_frontier(pts), key=id)


coords = st.floats(0.001, 1000, allow_nan=False)
point_lists = st.lists(st.tuples(st.integers(1, 6), st.integers(1, 6)), min_size=1, max_size=40)


@given(point_lists)
def test_frontier_with_ties_matches_brute_force(raw):
    # small integer grid forces many exact ties
    pts = [pt(float(t), float(l), label=str(i)) for i, (t, l) in enumerate(raw)]
    front = pareto_frontier(pts)
    assert {p.config_label for p in front} == {p.config_label for p in brute_force_frontier(pts)}
    assert [p.latency_mean for p in front] == sorted(p.latency_mean for p in front)


@given(st.lists(st.tuples(coords, coords), min_size=1, max_size=60))
def test_idempotent(raw):
    pts = [pt(t, l, label=str(i)) for i, (t, l) in enumerate(raw)]
    front = pareto_frontier(pts)
    assert pareto_frontier(front) == front


@given(st.lists(st.tuples(st.integers(1, 50), st.integers(1, 50)), min_size=1, max_size=60),
       st.sampled_from([0.5, 2.0, 8.0]), st.sampled_from([0.25, 4.0, 16.0]))
def test_scale_invariant(raw, sx, sy):
    # power-of-two factors keep the rescaling exact in floating point
    pts = [pt(float(t), float(l), label=str(i)) for i, (t, l) in enumerate(raw)]
    scaled = [pt(p.throughput_rps * sx, p.latency_mean * sy, label=p.config_label) for p in pts]
    assert {p.config_label for p in pareto_frontier(pts)} == {p.config_label for p in pareto_frontier(scaled)}


def curve(values, start=1):
    return [pt(v, 1.0, cap=start * 2**i) for i, v in enumerate(values)]


def test_saturation_never():
    assert saturation_point(curve([1, 2, 4, 8, 16])) is None


def test_saturation_example():
    assert saturation_point(curve([10.0, 19.0, 19.5], start=64), 0.10) == 128


def test_saturation_requires_doubling():
    with pytest.raises(OrderError):
        saturation_point([pt(1, 1, cap=1), pt(2, 1, cap=3)])
    with pytest.raises(ValidationError):
        saturation_point(curve([1, 2]), epsilon=0)


@given(st.lists(st.floats(0.1, 100), min_size=2, max_size=10), st.floats(0.01, 1), st.floats(0.01, 1))
def test_saturation_monotone_in_epsilon(values, e1, e2):
    lo, hi = sorted((e1, e2))
    pts = curve(values)
    a, b = saturation_point(pts, lo), saturation_point(pts, hi)
    if a is not None:
        assert b is not None and b <= a


def test_pow2_caps():
    assert pow2_caps(1) == [1]
    assert pow2_caps(16) == [1, 2, 4, 8, 16]
    assert default_caps(OPT_13B, A100_40GB, SINGLE, 768) == [1, 2, 4, 8, 16]


def test_single_cap_equals_direct_run(small_trace):
    (p,) = batch_sweep(OPT_125M, A100_40GB, SINGLE, small_trace, [4])
    m = run(OPT_125M, A100_40GB, SINGLE, EngineConfig(max_batch=4), small_trace).metrics
    assert (p.throughput_rps, p.latency_mean, p.tokens_per_s) == (m.throughput_rps, m.latency_mean, m.throughput_tps)
    assert p.config_label == "OPT-125M@tp1/b4"


def test_failed_points_recorded():
    failures = []
    trace = [Request(0, 0.0, 100_000, 100)]
    pts = batch_sweep(OPT_13B, A100_40GB, SINGLE, trace, [1, 2], failures=failures)
    assert pts == []
    assert [c for c, _ in failures] == [1, 2]


def test_parallel_sweep_matches_sequential(small_trace):
    caps = [1, 2, 4, 8]
    seq = batch_sweep(OPT_125M, A100_40GB, ParallelSpec(tp_degree=2), small_trace, caps)
    par = batch_sweep(OPT_125M, A100_40GB, ParallelSpec(tp_degree=2), small_trace, caps, jobs=2)
    assert seq == par
