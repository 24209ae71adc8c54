import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jointlink.embedding import (
    CONTEXT,
    FEAT,
    TARGET,
    TABLES,
    ParamStore,
    TrainConfig,
    export_text,
    init_params,
    load_text_table,
    mention_vector_from_features,
    project_norm,
    project_rows,
    sigmoid,
)


def test_sigmoid_saturation_and_symmetry():
    assert abs(sigmoid(50.0) - 1.0) < 1e-15
    assert sigmoid(-800.0) >= 0.0 and np.isfinite(sigmoid(-800.0))
    assert sigmoid(0.0) == 0.5
    xs = np.linspace(-30, 30, 61)
    np.testing.assert_allclose(sigmoid(xs) + sigmoid(-xs), 1.0, atol=1e-15)


def test_init_bounds_and_norms():
    params = init_params(["a", "b"], [0, 1, 2], ["X", "Y"], ["T"], d=4, seed=1)
    for name in TABLES:
        assert np.abs(params.tables[name]).max() <= 0.5 / 4
    # uniform in [-1/8, 1/8]^4 has norm at most sqrt(4)/8
    assert params.max_norm() <= 0.25
    assert params.ids[TARGET] == params.ids[CONTEXT] == ["X", "Y"]
    assert not np.array_equal(params.vec(TARGET, "X"), params.vec(CONTEXT, "X"))


def test_init_is_seeded():
    a = init_params(["f"], [0], ["E"], [], d=8, seed=3)
    b = init_params(["f"], [0], ["E"], [], d=8, seed=3)
    c = init_params(["f"], [0], ["E"], [], d=8, seed=4)
    assert all(np.array_equal(a.tables[n], b.tables[n]) for n in TABLES)
    assert not np.array_equal(a.tables[FEAT], c.tables[FEAT])


def test_init_rejects_bad_dimension():
    with pytest.raises(ValueError):
        init_params(["f"], d=0)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(d=0)
    with pytest.raises(ValueError):
        TrainConfig(alpha=0)
    with pytest.raises(ValueError):
        TrainConfig(Q=0)
    with pytest.raises(ValueError):
        TrainConfig(edge_sampling="greedy")
    with pytest.raises(ValueError):
        TrainConfig(fe_negatives="t")


def test_store_shape_check():
    with pytest.raises(ValueError):
        ParamStore(3, {FEAT: ["a"]}, {FEAT: np.zeros((2, 3))})


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=8))
def test_project_norm(values):
    v = np.array(values)
    out = project_norm(v.copy())
    assert np.linalg.norm(out) <= 1.0 + 1e-12
    if np.linalg.norm(v) <= 1.0:
        np.testing.assert_array_equal(out, v)


def test_project_rows_only_touches_listed_rows():
    table = np.full((3, 2), 3.0)
    project_rows(table, [0, 0, 2])
    assert np.linalg.norm(table[0]) == pytest.approx(1.0)
    assert np.linalg.norm(table[2]) == pytest.approx(1.0)
    np.testing.assert_array_equal(table[1], [3.0, 3.0])


def test_mention_vector_sums_known_features():
    params = init_params(["HEAD_x", "POS_NN"], d=3, seed=0)
    v = mention_vector_from_features(["HEAD_x", "POS_NN", "UNSEEN"], params)
    np.testing.assert_allclose(v, params.tables[FEAT].sum(axis=0))
    assert not mention_vector_from_features(["UNSEEN"], params).any()


def test_text_export_round_trip(tmp_path):
    params = init_params(["BIGRAM_a b", "HEAD_x"], [0, 7], ["New York"], ["city"], d=5, seed=2)
    paths = export_text(params, tmp_path)
    assert len(paths) == 5
    for name, path in zip(TABLES, paths):
        keys, table = load_text_table(path)
        assert keys == [str(k) for k in params.ids[name]]
        np.testing.assert_array_equal(table, params.tables[name])
