import warnings

import pytest
from hypothesis import given
from hypothesis import strategies as st

from slmsim.errors import ValidationError
from slmsim.model_catalog import (
    BUILTIN_MODELS,
    OPT_1_3B,
    OPT_13B,
    OPT_125M,
    ModelCatalog,
    ModelSpec,
    flops_per_token,
    kv_bytes_per_token,
    weights_bytes,
)

# Parameters column of the published batch-size table (bytes, FP16)
TABLE1_WEIGHTS = {
    "OPT-125M": 250_000_000,
    "OPT-1.3B": 2_600_000_000,
    "OPT-2.7B": 5_400_000_000,
    "OPT-6.7B": 13_400_000_000,
    "OPT-13B": 26_000_000_000,
}


def test_builtin_catalog_has_opt_family():
    cat = ModelCatalog()
    assert cat.names() == list(TABLE1_WEIGHTS)
    assert cat["OPT-2.7B"].head_dim == 80


def test_unknown_model_names_known_entries():
    with pytest.raises(ValidationError, match="OPT-125M"):
        ModelCatalog()["GPT-9"]


def test_catalog_extension():
    extra = ModelSpec("tiny", 1000, n_layers=1, n_heads=1, head_dim=4, hidden=4)
    cat = ModelCatalog([extra])
    assert cat["tiny"] is extra
    assert len(cat) == 6


@pytest.mark.parametrize("model", BUILTIN_MODELS, ids=lambda m: m.name)
def test_weights_match_table1(model):
    assert weights_bytes(model) == TABLE1_WEIGHTS[model.name]


def test_weights_of_empty_model():
    m = ModelSpec("empty", 0, n_layers=1, n_heads=1, head_dim=1, hidden=1)
    assert weights_bytes(m) == 0


def test_kv_bytes_examples():
    assert kv_bytes_per_token(OPT_13B) == 819_200
    assert kv_bytes_per_token(OPT_1_3B) == 196_608
    unit = ModelSpec("unit", 1, n_layers=1, n_heads=1, head_dim=1, hidden=1)
    assert kv_bytes_per_token(unit) == 4


def test_flops_examples():
    assert flops_per_token(OPT_13B, 768) == 26_943_718_400
    assert flops_per_token(OPT_125M, 768) == 292_467_328
    assert flops_per_token(OPT_1_3B, 0) == 2 * OPT_1_3B.n_params


def test_negative_seq_len_rejected():
    with pytest.raises(ValidationError):
        flops_per_token(OPT_125M, -1)


@pytest.mark.parametrize(
    "kwargs",
    [dict(n_layers=0), dict(hidden=-4), dict(bytes_per_value=3)],
)
def test_invalid_specs(kwargs):
    base = dict(name="x", n_params=10, n_layers=1, n_heads=1, head_dim=4, hidden=4)
    with pytest.raises(ValidationError):
        ModelSpec(**{**base, **kwargs})


def test_head_width_mismatch_warns_but_is_accepted():
    with pytest.warns(UserWarning, match="differs from hidden"):
        m = ModelSpec("odd", 10, n_layers=2, n_heads=4, head_dim=8, hidden=40)
    # KV sizing uses hidden; FLOPs use heads*head_dim
    assert kv_bytes_per_token(m) == 2 * 2 * 40 * 2
    assert flops_per_token(m, 1) - flops_per_token(m, 0) == 6 * 2 * 32


def test_opt_family_is_consistent():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        for m in BUILTIN_MODELS:
            ModelSpec(m.name, m.n_params, m.n_layers, m.n_heads, m.head_dim, m.hidden)


dims = st.integers(min_value=1, max_value=10_000)


@given(layers=dims, heads=st.integers(1, 64), head_dim=st.integers(1, 256), bpv=st.sampled_from([1, 2]))
def test_kv_linear_in_each_factor(layers, heads, head_dim, bpv):
    hidden = heads * head_dim
    m = ModelSpec("m", 1, layers, heads, head_dim, hidden, bpv)
    base = kv_bytes_per_token(m)
    assert kv_bytes_per_token(ModelSpec("m", 1, 2 * layers, heads, head_dim, hidden, bpv)) == 2 * base
    assert kv_bytes_per_token(ModelSpec("m", 1, layers, 2 * heads, head_dim, 2 * hidden, bpv)) == 2 * base
    assert kv_bytes_per_token(ModelSpec("m", 1, layers, heads, head_dim, hidden, 2 * bpv)) == 2 * base


@given(model=st.sampled_from(BUILTIN_MODELS), t1=st.integers(0, 100_000), t2=st.integers(0, 100_000))
def test_flops_difference_exact(model, t1, t2):
    diff = flops_per_token(model, t2) - flops_per_token(model, t1)
    assert diff == 6 * model.n_layers * model.n_heads * model.head_dim * (t2 - t1)
    if t2 >= t1:
        assert diff >= 0
