"""Observation-state encoding, synthetic document features, normalization,
and the feature TSV format."""
import itertools

import numpy as np
import pytest

from declick.features import (
    BIAS_DIM, DOC_DIM, FeatureNormalizer, ObservationLabel, encode_bias,
    encode_bias_batch, read_feature_tsv, synth_doc_features,
    write_feature_tsv,
)

OC = ObservationLabel.OBSERVED_CLICK
ONC = ObservationLabel.OBSERVED_NO_CLICK
UNC = ObservationLabel.UNOBSERVED_NO_CLICK


def ones_at(v):
    return set(np.flatnonzero(v))


def test_encode_bias_initial_state():
    # T=10, everything unobserved, window at the top, cursor at rank 1.
    v = encode_bias([UNC] * 10, window_start=1, t=1, T=10, window_size=3)
    assert v.shape == (BIAS_DIM,)
    assert ones_at(v) == {20, 21, 22, 30}


def test_encode_bias_labelled_state():
    # T=3, ranks 1..3 labelled [ObservedClick, ObservedNoClick, Unobserved],
    # window covering 1..3, cursor at rank 3.
    v = encode_bias([OC, ONC, UNC], window_start=1, t=3, T=3, window_size=3)
    assert ones_at(v) == {0, 1, 10, 20, 21, 22, 32}


def test_encode_bias_binary_alphabet_and_padding():
    v = encode_bias([OC, UNC, ONC, OC, UNC], window_start=3, t=4, T=5)
    assert set(np.unique(v)) <= {0.0, 1.0}
    assert not v[40:].any()


def test_encode_bias_window_clipped_to_T():
    v = encode_bias([ONC] * 4, window_start=3, t=4, T=4, window_size=3)
    # window covers ranks 3..5 but T=4, so only bits 22, 23 are set
    assert ones_at(v[20:30]) == {2, 3}


def test_encode_bias_errors():
    with pytest.raises(ValueError):
        encode_bias([UNC] * 3, window_start=1, t=0, T=3)
    with pytest.raises(ValueError):
        encode_bias([UNC] * 3, window_start=1, t=4, T=3)
    with pytest.raises(ValueError):
        encode_bias([UNC] * 3, window_start=0, t=1, T=3)
    with pytest.raises(ValueError):
        encode_bias([UNC] * 2, window_start=1, t=1, T=3)


def test_encode_bias_injective_over_small_states():
    # Distinct (labels, window_start, t) must encode to distinct vectors.
    T, w = 3, 3
    seen = {}
    for labels in itertools.product([OC, ONC, UNC], repeat=T):
        for ws in range(1, T + 2):
            for t in range(1, T + 1):
                key = encode_bias(labels, ws, t, T, w).tobytes()
                state = (labels, ws, t)
                assert seen.setdefault(key, state) == state
    assert len(seen) == 27 * 4 * 3


def test_encode_bias_batch_matches_scalar():
    rng = np.random.default_rng(0)
    for t in (1, 3, 7):
        n = 40
        T = rng.integers(t, 11, size=n)
        labels = np.full((n, 10), UNC, dtype=np.int8)
        for i in range(n):
            labels[i, :T[i]] = rng.choice([OC, ONC, UNC], size=T[i])
        ws = np.array([rng.integers(1, Ti + 1) for Ti in T])
        batch = encode_bias_batch(labels, ws, t, T)
        for i in range(n):
            ref = encode_bias(labels[i, :T[i]], int(ws[i]), t, int(T[i]))
            assert np.array_equal(batch[i], ref)


# ---------------------------------------------------------------------------
# synthetic document features

def test_synth_doc_features_shape_and_determinism():
    a = synth_doc_features(0.4, seed=123)
    b = synth_doc_features(0.4, seed=123)
    c = synth_doc_features(0.4, seed=124)
    assert a.shape == (DOC_DIM,)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.isfinite(a).all()


def test_synth_doc_features_signal_separation():
    # relevance 1.0 vs 0.0, 1000 samples each: the signal coordinates'
    # means must differ by at least 0.8.
    hi = np.mean([synth_doc_features(1.0, seed=i)[:8].mean()
                  for i in range(1000)])
    lo = np.mean([synth_doc_features(0.0, seed=10_000 + i)[:8].mean()
                  for i in range(1000)])
    assert hi - lo >= 0.8


def test_synth_doc_features_range_check():
    with pytest.raises(ValueError):
        synth_doc_features(1.5, seed=0)


# ---------------------------------------------------------------------------
# normalizer

def test_normalizer_scales_to_unit_interval():
    rng = np.random.default_rng(1)
    rows = [rng.normal(size=DOC_DIM) * 5 + 2 for _ in range(50)]
    norm = FeatureNormalizer.fit(rows)
    tx = np.stack([norm.transform(r) for r in rows])
    assert tx.min() >= 0.0 and tx.max() <= 1.0
    assert np.isclose(tx.min(axis=0), 0.0).all()
    assert np.isclose(tx.max(axis=0), 1.0).all()


def test_normalizer_constant_coordinate():
    rows = [np.full(DOC_DIM, 3.0) for _ in range(4)]
    norm = FeatureNormalizer.fit(rows)
    assert np.allclose(norm.transform(rows[0]), 0.5)


def test_normalizer_dict_round_trip():
    rng = np.random.default_rng(2)
    norm = FeatureNormalizer.fit([rng.random(DOC_DIM) for _ in range(10)])
    back = FeatureNormalizer.from_dict(norm.to_dict())
    x = rng.random(DOC_DIM)
    assert np.array_equal(norm.transform(x), back.transform(x))


# ---------------------------------------------------------------------------
# feature TSV

def test_feature_tsv_round_trip(tmp_path, tiny_sim):
    ds, _ = tiny_sim
    path = tmp_path / "features.tsv"
    write_feature_tsv(path, ds.feature_table)
    back = read_feature_tsv(path)
    assert set(back) == set(ds.feature_table)
    for k in back:
        assert np.array_equal(back[k], ds.feature_table[k])
