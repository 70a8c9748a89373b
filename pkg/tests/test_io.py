import numpy as np
import pytest
from hypothesis import given, strategies as st

from bnpsurv import io
from bnpsurv.data_model import DataError, Dataset
from bnpsurv.frailty import GfmTrace, fit_gfm
from bnpsurv.samplers import McmcConfig, run_chain


def test_parse_example():
    d = io.parse_dataset("group,time,status\nA,1.5,1\nA,2.0,0\nB,0.7,1")
    assert d.group_count == 2 and d.labels == ("A", "B")
    assert list(d.group_sizes) == [2, 1]
    assert list(d.events) == [True, False, True]


@pytest.mark.parametrize("text,where", [
    ("group,time,status\nA,1.5,1\nB,2.0,2\n", "row 3"),
    ("group,time,status\nA,x,1\n", "row 2"),
    ("group,time,status\nA,-1,1\n", "row 2"),
    ("group,time,status\n,1.0,1\n", "row 2"),
])
def test_bad_rows_are_named(text, where):
    with pytest.raises(DataError, match=where):
        io.parse_dataset(text)


def test_missing_columns_and_empty():
    with pytest.raises(DataError, match="missing column"):
        io.parse_dataset("group,time\nA,1\n")
    with pytest.raises(DataError, match="empty"):
        io.parse_dataset("group,time,status\n")


rows = st.lists(st.tuples(st.sampled_from(["a", "b", "grp 3", "ü"]),
                          st.floats(1e-8, 1e8, allow_nan=False), st.booleans()), min_size=1, max_size=30)


@given(rows)
def test_dataset_round_trip(data_rows):
    labels = list(dict.fromkeys(g for g, _, _ in data_rows))
    d = Dataset([t for _, t, _ in data_rows], [e for _, _, e in data_rows],
                [labels.index(g) for g, _, _ in data_rows], labels=tuple(labels))
    text = io.serialize_dataset(d)
    assert io.parse_dataset(text) == d
    assert io.serialize_dataset(io.parse_dataset(text)) == text


def test_file_round_trip(tmp_path, small_data):
    io.write_dataset(tmp_path / "d.csv", small_data)
    assert io.read_dataset(tmp_path / "d.csv") == small_data
    assert [p.name for p in tmp_path.iterdir()] == ["d.csv"]


@pytest.mark.parametrize("model", ["dp", "hdp", "ndp", "idp"])
def test_trace_round_trip(model, small_data):
    cfg = McmcConfig(iterations=20, burn_in=10, thin=3, L=5, K=3, L_ndp=4)
    trace = run_chain(model, small_data, cfg)
    back, labels = io.parse_trace(io.serialize_trace(trace, small_data.labels))
    assert labels == list(small_data.labels)
    assert back.model == model and back.config == cfg and back.base == trace.base
    np.testing.assert_array_equal(back.log_score_matrix(small_data), trace.log_score_matrix(small_data))
    grid = np.linspace(0, 5, 9)
    np.testing.assert_array_equal(back.survival_draws(2, grid), trace.survival_draws(2, grid))


def test_gfm_trace_round_trip(small_data):
    trace = GfmTrace.from_fit(fit_gfm(small_data), small_data.group_count, n_draws=20)
    back, _ = io.parse_trace(io.serialize_trace(trace))
    assert back.fit.params == trace.fit.params
    np.testing.assert_array_equal(back.log_score_matrix(small_data), trace.log_score_matrix(small_data))


def test_not_a_trace():
    with pytest.raises(DataError):
        io.parse_trace('{"format": "other"}\n')
    with pytest.raises(DataError):
        io.parse_trace("{oops\n")


def test_curve_and_metrics_round_trip():
    grid = np.array([0.0, 1.0, 2.5])
    text = io.serialize_curves([("g0", grid, [1.0, 0.6, 0.2], [1.0, 0.5, 0.1], [1.0, 0.7, 0.3])])
    back = io.parse_curves(text)
    np.testing.assert_array_equal(back["g0"]["t"], grid)
    np.testing.assert_array_equal(back["g0"]["upper"], [1.0, 0.7, 0.3])
    row = {"model": "dp", "scenario": "J10_n60", "replicate": "2", "mean_lppd": -1.25,
           "mean_width": 0.125, "coverage": 0.875}
    assert io.parse_metrics(io.serialize_metrics([row])) == [row]


def test_truth_round_trip():
    text = io.serialize_truth(["a", "b"], [0, 2], [0.5, 1.25])
    assert io.parse_truth(text) == {"a": (0, 0.5), "b": (2, 1.25)}


def test_config_round_trip(tmp_path):
    (tmp_path / "c.ini").write_text(io.serialize_config("fit", {"seed": 3, "model": "dp"}))
    cp = io.read_config(tmp_path / "c.ini")
    assert dict(cp["fit"]) == {"model": "dp", "seed": "3"}
