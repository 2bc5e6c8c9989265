"""Log parsing/writing, the interactive-CSV converter, the simulator, and
dataset splitting."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from declick.clicklog import (
    ClickLogError, Dataset, ExamModel, Impression, SimConfig,
    last_click_position, parse_canonical, parse_interactive_csv,
    parse_interactive_row, read_canonical_file, read_ground_truth,
    simulate_logs, split_dataset, write_canonical, write_canonical_file,
    write_ground_truth,
)

# ---------------------------------------------------------------------------
# canonical format

def test_parse_canonical_example():
    imp = parse_canonical("s1\tq7\td1|d2|d3\t010")
    assert imp.session_id == "s1"
    assert imp.query_id == "q7"
    assert imp.doc_ids == ("d1", "d2", "d3")
    assert imp.clicks == (0, 1, 0)


def test_write_canonical_inverse():
    line = "s1\tq7\td1|d2|d3\t010"
    assert write_canonical(parse_canonical(line)) == line


@pytest.mark.parametrize("line,fragment", [
    ("s1\tq7\td1|d2\t010", "length"),            # click/doc count mismatch
    ("s1\tq7\td1|d2|d3", "4 tab-separated"),      # missing field
    ("s1\tq7\td1|d2|d3\t01x", "outside 0/1"),     # bad click char
    ("a\tb\tc\td\te", "4 tab-separated"),          # extra field
])
def test_parse_canonical_errors(line, fragment):
    with pytest.raises(ClickLogError, match=fragment):
        parse_canonical(line)


def test_parse_error_carries_line_number():
    with pytest.raises(ClickLogError, match=r"line 3"):
        list(read_canonical_file(["s\tq\td1\t1\n", "s\tq\td1\t0\n",
                                  "s\tq\td1\t11\n"]))


def test_read_canonical_skips_blank_lines():
    imps = list(read_canonical_file(["s\tq\td1\t1\n", "\n", "s\tq\td2\t0\n"]))
    assert len(imps) == 2


def test_impression_validation():
    with pytest.raises(ClickLogError):
        Impression("s", "q", (), ())
    with pytest.raises(ClickLogError):
        Impression("s", "q", tuple(f"d{i}" for i in range(11)), (0,) * 11)
    with pytest.raises(ClickLogError):
        Impression("s", "q", ("d1",), (2,))


_ids = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789_-", min_size=1,
               max_size=8)


@given(session=_ids, query=_ids,
       docs=st.lists(_ids, min_size=1, max_size=10, unique=True),
       data=st.data())
@settings(max_examples=200, deadline=None)
def test_canonical_round_trip_property(session, query, docs, data):
    clicks = tuple(data.draw(st.integers(0, 1)) for _ in docs)
    imp = Impression(session, query, tuple(docs), clicks)
    assert parse_canonical(write_canonical(imp)) == imp


def test_canonical_file_round_trip(tmp_path, tiny_sim):
    ds, _ = tiny_sim
    path = tmp_path / "log.tsv"
    write_canonical_file(path, ds.impressions)
    with open(path, encoding="utf-8") as fh:
        back = list(read_canonical_file(fh))
    assert back == ds.impressions


# ---------------------------------------------------------------------------
# interactive CSV format

_HEADER = ("visitor ID,session id,date,time,searchterm,click sku,"
           "atc sku,order sku,product impression")

# The three worked example rows of the interactive format.
_ROWS = [
    "v1,s100,2019-07-01,10:00:00,everbilt dropcloth,2034,,,3072|2034|2037|2036",
    "v2,s101,2019-07-01,10:05:00,pull down shades,3022,3022,,3022|2051|3042|2071",
    "v3,s102,2019-07-01,10:06:00,fence panel,,,,2030|1003|2029|1000",
]


def test_interactive_rows_to_bitstrings():
    imps, skipped = parse_interactive_csv(_HEADER + "\n" + "\n".join(_ROWS) + "\n")
    assert skipped == 0
    bits = ["".join(str(c) for c in imp.clicks) for imp in imps]
    assert bits == ["0100", "1000", "0000"]
    assert imps[0].query_id == "everbilt dropcloth"
    assert imps[0].session_id == "s100"
    assert imps[0].doc_ids == ("3072", "2034", "2037", "2036")


def test_interactive_comma_separated_clicks():
    row = "v1,s1,d,t,tv,SKU1,SKU3 ,,SKU1|SKU2|SKU3"
    imps, skipped = parse_interactive_csv(_HEADER + "\n" + row + "\n")
    assert skipped == 0
    assert imps[0].clicks == (1, 0, 0)
    imp = parse_interactive_row({
        "session id": "s1", "searchterm": "tv", "click sku": "SKU1, SKU3",
        "product impression": "SKU1|SKU2|SKU3"})
    assert imp.clicks == (1, 0, 1)


def test_interactive_click_not_in_impressions_skipped():
    bad = "v1,s1,d,t,tv,SKU9,,,SKU1|SKU2"
    imps, skipped = parse_interactive_csv(
        _HEADER + "\n" + bad + "\n" + _ROWS[1] + "\n")
    assert skipped == 1
    assert len(imps) == 1


def test_interactive_empty_impression_skipped():
    bad = "v1,s1,d,t,tv,,,,"
    _, skipped = parse_interactive_csv(_HEADER + "\n" + bad + "\n")
    assert skipped == 1


def test_interactive_missing_column_raises():
    with pytest.raises(ClickLogError, match="columns"):
        parse_interactive_csv("visitor ID,session id\nv1,s1\n")


# ---------------------------------------------------------------------------
# last click position

@pytest.mark.parametrize("bits,expect", [
    ("0100", 2), ("0000", None), ("101", 3), ("1", 1),
])
def test_last_click_position(bits, expect):
    imp = Impression("s", "q", tuple(f"d{i}" for i in range(len(bits))),
                     tuple(int(b) for b in bits))
    assert last_click_position(imp) == expect


# ---------------------------------------------------------------------------
# exam models

def test_exam_probs_shapes_and_values():
    assert np.allclose(ExamModel.rank_decay(1.0).exam_probs(4),
                       [1, 1 / 2, 1 / 3, 1 / 4])
    assert np.allclose(ExamModel.cascade(0.7).exam_probs(3),
                       [1.0, 0.7, 0.49])
    assert np.allclose(ExamModel.window(3, 0.95, 0.05).exam_probs(5),
                       [0.95, 0.95, 0.95, 0.05, 0.05])


def test_exam_model_unknown_kind():
    with pytest.raises(ClickLogError):
        ExamModel("bogus", ())


# ---------------------------------------------------------------------------
# simulator

def test_simulator_ctr_matches_exam_curve():
    # relevance fixed at 1 => CTR at rank r estimates exam prob = 1/r.
    cfg = SimConfig(n_queries=10, docs_per_query=10,
                    impressions_per_query=1000, positions=10,
                    exam_model=ExamModel.rank_decay(1.0),
                    relevance_prior="constant:1", seed=11)
    ds, _ = simulate_logs(cfg)
    clicks = np.array([imp.clicks for imp in ds.impressions], dtype=float)
    n = clicks.shape[0]
    for r in range(10):
        p = 1.0 / (r + 1)
        sigma = math.sqrt(p * (1 - p) / n)
        # rank 1 has p=1 exactly (zero variance), hence the additive slack
        assert abs(clicks[:, r].mean() - p) <= 3.5 * sigma + 1e-12


def test_simulator_zero_relevance_never_clicks():
    cfg = SimConfig(n_queries=5, docs_per_query=10, impressions_per_query=50,
                    relevance_prior="constant:0", seed=1)
    ds, _ = simulate_logs(cfg)
    assert all(c == 0 for imp in ds.impressions for c in imp.clicks)


def test_simulator_deterministic(tmp_path):
    cfg = SimConfig(n_queries=6, docs_per_query=10, impressions_per_query=5,
                    seed=42)
    a, ta = simulate_logs(cfg)
    b, tb = simulate_logs(cfg)
    assert a.impressions == b.impressions
    assert ta.relevance == tb.relevance
    for k in a.feature_table:
        assert np.array_equal(a.feature_table[k], b.feature_table[k])


def test_simulator_feature_table_covers_log(small_sim):
    ds, truth = small_sim
    ds.check_features()
    assert set(truth.relevance) == set(ds.feature_table)


def test_sim_config_validation():
    with pytest.raises(ClickLogError):
        SimConfig(n_queries=0, docs_per_query=10, impressions_per_query=1)
    with pytest.raises(ClickLogError):
        SimConfig(n_queries=1, docs_per_query=3, impressions_per_query=1,
                  positions=5)
    with pytest.raises(ClickLogError):
        SimConfig(n_queries=1, docs_per_query=10, impressions_per_query=1,
                  positions=11)


def test_ground_truth_round_trip(tmp_path, tiny_sim):
    _, truth = tiny_sim
    path = tmp_path / "truth.tsv"
    write_ground_truth(path, truth)
    back = read_ground_truth(path)
    assert back.exam_model == truth.exam_model
    assert back.relevance == truth.relevance


# ---------------------------------------------------------------------------
# splitting

def _sessions(ds):
    return {imp.session_id for imp in ds.impressions}


def test_split_sizes_and_partition():
    imps = [Impression(f"s{i}", "q", ("d1",), (0,)) for i in range(10)]
    ds = Dataset(imps)
    tr, va, te = split_dataset(ds, (0.8, 0.1, 0.1), seed=0)
    assert (len(tr), len(va), len(te)) == (8, 1, 1)
    assert _sessions(tr) | _sessions(va) | _sessions(te) == _sessions(ds)
    assert not (_sessions(tr) & _sessions(va))
    assert not (_sessions(tr) & _sessions(te))
    assert not (_sessions(va) & _sessions(te))


def test_split_keeps_sessions_together(small_sim):
    ds, _ = small_sim
    tr, va, te = split_dataset(ds, (0.6, 0.2, 0.2), seed=5)
    assert len(tr) + len(va) + len(te) == len(ds)
    assert not (_sessions(tr) & _sessions(va))
    assert not (_sessions(va) & _sessions(te))
    assert not (_sessions(tr) & _sessions(te))


def test_split_deterministic(small_sim):
    ds, _ = small_sim
    a = split_dataset(ds, (0.8, 0.1, 0.1), seed=9)
    b = split_dataset(ds, (0.8, 0.1, 0.1), seed=9)
    for x, y in zip(a, b):
        assert x.impressions == y.impressions


def test_split_bad_ratios():
    ds = Dataset([Impression("s", "q", ("d",), (0,))])
    with pytest.raises(ClickLogError):
        split_dataset(ds, (0.5, 0.5, 0.5), seed=0)
    with pytest.raises(ClickLogError):
        split_dataset(ds, (1.0, 0.0, 0.0), seed=0)
