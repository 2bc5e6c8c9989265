"""DRLC episode mechanics, pretraining, training, and the model bundle."""
import numpy as np
import pytest

from declick.clicklog import Dataset, Impression, split_dataset
from declick.drlc import (
    DrlcModel, Hyper, TrainingError, c2_pretrain_positions, compile_episodes,
    drlc_predict, label_position, pretrain, reward, run_episode,
    run_episodes_batch, sequential_bias, train, validation_ll,
    window_start_at,
)
from declick.features import FeatureNormalizer, ObservationLabel
from declick.nn import OptConfig, save_checkpoint

OC = ObservationLabel.OBSERVED_CLICK
ONC = ObservationLabel.OBSERVED_NO_CLICK
UNC = ObservationLabel.UNOBSERVED_NO_CLICK

HP = Hyper(epochs=2, pretrain_epochs=1,
           opt=OptConfig(learning_rate=1e-3, batch_size=32))


class StubNet:
    """Duck-typed network returning a constant probability."""

    def __init__(self, value):
        self.value = value

    def forward_single(self, x, train=False):
        return float(self.value)

    def forward(self, x, train=False):
        return np.full(x.shape[0], float(self.value))


class TableNet(StubNet):
    """Returns a seeded pseudo-random probability per input."""

    def __init__(self, seed):
        self.seed = seed

    def _one(self, x):
        h = np.random.default_rng(
            [self.seed, abs(hash(np.asarray(x).tobytes())) % 2**32])
        return float(h.uniform(0.01, 0.99))

    def forward_single(self, x, train=False):
        return self._one(x)

    def forward(self, x, train=False):
        return np.array([self._one(row) for row in np.atleast_2d(x)])


def imp_of(bits, qid="q"):
    return Impression("s", qid, tuple(f"d{i}" for i in range(len(bits))),
                      tuple(int(b) for b in bits))


# ---------------------------------------------------------------------------
# labeling and reward

def test_label_clicked_always_observed():
    assert label_position(1, 0.001, 0.999, HP) is OC
    assert label_position(1, 0.9, 0.1, HP) is OC


def test_label_ratio_below_theta_unobserved():
    # 0.2 / 0.8 = 0.25 < theta = 0.3
    assert label_position(0, 0.2, 0.8, HP) is UNC


def test_label_ratio_above_theta_observed():
    # 0.5 / 0.6 = 0.833 >= 0.3
    assert label_position(0, 0.5, 0.6, HP) is ONC


def test_label_c2_floor():
    # c2 below the floor is clamped, so tiny c1 still divides safely
    assert label_position(0, 1e-9, 0.0, HP) is UNC


def test_reward_perfect_fit_zero():
    assert reward(1, 1.0, 1.0, 1, HP) == 0.0


def test_reward_worked_example():
    # (1-0.5)^2 + 0.7 * (1-0.5)^2 = 0.25 + 0.175
    assert reward(1, 0.5, 0.5, 1, HP) == pytest.approx(0.425, abs=1e-15)


def test_reward_observation_gate():
    # o_t = 0 drops the second term: (0-0.2)^2 = 0.04
    assert reward(0, 0.2, 0.9, 0, HP) == pytest.approx(0.04, abs=1e-15)


def test_reward_gate_algebra_random():
    rng = np.random.default_rng(0)
    for _ in range(200):
        c_t = int(rng.integers(2))
        c1, c2 = rng.random(2)
        base = reward(c_t, c1, c2, 0, HP)
        gated = reward(c_t, c1, c2, 1, HP)
        assert base == (c_t - c1) ** 2
        assert gated == base + HP.beta * (c_t - c2) ** 2


# ---------------------------------------------------------------------------
# window mechanics

def test_window_start_at_formula():
    assert [window_start_at(t, 3) for t in range(1, 8)] == \
        [1, 1, 1, 2, 3, 4, 5]


def test_episode_window_never_advances_when_T_equals_window():
    res = run_episode(StubNet(0.5), StubNet(0.5), imp_of("010"),
                      np.zeros((3, 56)), HP)
    assert res.final.window_start == 1


def test_episode_window_monotone_and_bounded():
    rng = np.random.default_rng(1)
    for trial in range(30):
        T = int(rng.integers(1, 11))
        bits = "".join(str(int(b)) for b in rng.integers(0, 2, T))
        # window progression is label-independent, so stubs suffice
        res = run_episode(TableNet(trial), TableNet(100 + trial),
                          imp_of(bits), rng.random((T, 56)), HP)
        assert res.final.window_start == window_start_at(T, HP.window_size)


# ---------------------------------------------------------------------------
# episodes

def test_episode_clicked_positions_end_observed_click():
    res = run_episode(TableNet(0), TableNet(1), imp_of("0110010100"),
                      np.random.default_rng(0).random((10, 56)), HP)
    for pos, bit in enumerate("0110010100"):
        if bit == "1":
            assert res.final.labels[pos] is OC
        else:
            assert res.final.labels[pos] is not OC


def test_episode_zero_cost_iff_exact_predictions():
    imp = imp_of("111")
    res = run_episode(StubNet(1.0), StubNet(1.0), imp, np.zeros((3, 56)), HP)
    assert res.costs == [0.0, 0.0, 0.0]
    assert res.return_value == 0.0
    res2 = run_episode(StubNet(0.9), StubNet(1.0), imp, np.zeros((3, 56)), HP)
    assert all(c > 0 for c in res2.costs)


def test_episode_return_discounts_costs():
    hp = Hyper(epochs=1, pretrain_epochs=1, discount=0.5)
    res = run_episode(StubNet(0.5), StubNet(0.5), imp_of("11"),
                      np.zeros((2, 56)), hp)
    expect = res.costs[0] + 0.5 * res.costs[1]
    assert res.return_value == pytest.approx(expect, abs=1e-12)


def test_episode_requires_rng_for_epsilon():
    hp = Hyper(epochs=1, pretrain_epochs=1, epsilon=0.2)
    with pytest.raises(ValueError):
        run_episode(StubNet(0.5), StubNet(0.5), imp_of("01"),
                    np.zeros((2, 56)), hp)
    # with an rng, clicked positions stay ObservedClick
    res = run_episode(StubNet(0.5), StubNet(0.5), imp_of("11"),
                      np.zeros((2, 56)), hp,
                      rng=np.random.default_rng(0))
    assert all(lab is OC for lab in res.final.labels)


def test_sequential_bias_matches_replay_convention():
    # At cursor t only ranks strictly before t are observed, with click
    # flags from the log.
    rows = sequential_bias((1, 0, 1, 0), 4, 3)
    assert rows.shape == (4, 100)
    assert not rows[0, 0:20].any()            # nothing observed at t=1
    assert set(np.flatnonzero(rows[2, 0:20])) == {0, 1, 10}
    assert set(np.flatnonzero(rows[3, 0:20])) == {0, 1, 2, 10, 12}
    for t in range(4):
        assert rows[t, 30 + t] == 1.0


# ---------------------------------------------------------------------------
# batched runner equals the reference

@pytest.fixture(scope="module")
def pretrained(small_sim):
    ds, _ = small_sim
    hp = Hyper(epochs=2, pretrain_epochs=1, seed=1,
               opt=OptConfig(learning_rate=3e-3, batch_size=64))
    norm = FeatureNormalizer.fit(ds.feature_table.values())
    c1, c2 = pretrain(ds, hp, norm)
    return ds, hp, norm, c1, c2


def test_batched_episodes_match_reference(pretrained):
    ds, hp, norm, c1, c2 = pretrained
    sub = Dataset(ds.impressions[:50], ds.feature_table)
    ce = compile_episodes(sub, norm, hp.np_dtype)
    labels, costs, c1_trace = run_episodes_batch(c1, c2, ce, hp)
    for i, imp in enumerate(sub.impressions):
        docs = np.stack([norm.transform(ds.feature_table[(imp.query_id, d)])
                         for d in imp.doc_ids]).astype(hp.np_dtype)
        ref = run_episode(c1, c2, imp, docs, hp)
        T = len(imp)
        assert np.array_equal(labels[i, :T],
                              np.array(ref.final.labels, dtype=np.int8))
        assert np.allclose(costs[i, :T], ref.costs, atol=1e-6)
        assert np.allclose(c1_trace[i, :T], ref.c1_trace, atol=1e-6)


def test_batched_clicked_implies_observed(pretrained):
    ds, hp, norm, c1, c2 = pretrained
    ce = compile_episodes(ds, norm, hp.np_dtype)
    labels, _, _ = run_episodes_batch(c1, c2, ce, hp)
    clicked = ce.clicks > 0
    assert np.all(labels[clicked] == OC)
    assert np.all(labels[~clicked] != OC)


# ---------------------------------------------------------------------------
# pretraining

def test_c2_pretrain_positions_examples():
    assert c2_pretrain_positions(imp_of("0100"), HP) == [1]
    assert c2_pretrain_positions(imp_of("0000"), HP) == []
    assert c2_pretrain_positions(imp_of("0011"), HP) == [1, 2, 3]
    inclusive = Hyper(epochs=1, pretrain_epochs=1, c2_pretrain_inclusive=True)
    assert c2_pretrain_positions(imp_of("0100"), inclusive) == [1, 2]


def test_pretrain_without_clicks_raises(small_sim):
    ds, _ = small_sim
    clickless = Dataset(
        [Impression(i.session_id, i.query_id, i.doc_ids, (0,) * len(i))
         for i in ds.impressions[:20]], ds.feature_table)
    with pytest.raises(TrainingError, match="no impression has a click"):
        pretrain(clickless, HP)


def test_pretrain_deterministic(small_sim, tmp_path):
    ds, _ = small_sim
    hp = Hyper(epochs=1, pretrain_epochs=1, seed=3)
    paths = []
    for run in range(2):
        c1, c2 = pretrain(ds, hp)
        p1, p2 = tmp_path / f"c1_{run}", tmp_path / f"c2_{run}"
        save_checkpoint(c1, p1)
        save_checkpoint(c2, p2)
        paths.append((p1, p2))
    assert paths[0][0].read_bytes() == paths[1][0].read_bytes()
    assert paths[0][1].read_bytes() == paths[1][1].read_bytes()


# ---------------------------------------------------------------------------
# training

@pytest.fixture(scope="module")
def trained(small_sim):
    ds, _ = small_sim
    hp = Hyper(epochs=3, pretrain_epochs=1, seed=2,
               opt=OptConfig(learning_rate=3e-3, batch_size=64))
    c1, c2, history = train(ds, hp)
    return ds, hp, c1, c2, history


def test_train_history_shape(trained):
    _, hp, _, _, history = trained
    assert history[0]["epoch"] == 0
    assert np.isnan(history[0]["mean_cost"])
    assert len(history) <= hp.epochs + 1
    for h in history[1:]:
        assert h["mean_cost"] >= 0.0
        assert np.isfinite(h["val_ll"])


def test_train_returns_best_validation_c1(trained, small_sim):
    ds, hp, c1, c2, history = trained
    from declick.drlc.training import split_valid
    _, va_ds = split_valid(ds, hp)
    norm = FeatureNormalizer.fit(ds.feature_table.values())
    ce_va = compile_episodes(va_ds, norm, hp.np_dtype)
    got = validation_ll(c1, c2, ce_va, hp)
    assert got == pytest.approx(max(h["val_ll"] for h in history), abs=1e-9)


def test_train_deterministic_history(small_sim):
    ds, _ = small_sim
    hp = Hyper(epochs=2, pretrain_epochs=1, seed=4,
               opt=OptConfig(learning_rate=1e-3, batch_size=64))
    _, _, h1 = train(ds, hp)
    _, _, h2 = train(ds, hp)
    assert [h["epoch"] for h in h1] == [h["epoch"] for h in h2]
    assert [h["val_ll"] for h in h1] == [h["val_ll"] for h in h2]
    assert np.array_equal([h["mean_cost"] for h in h1],
                          [h["mean_cost"] for h in h2], equal_nan=True)


# ---------------------------------------------------------------------------
# hyperparameters

def test_hyper_defaults_and_validation():
    hp = Hyper(epochs=1, pretrain_epochs=1)
    assert (hp.beta, hp.theta, hp.window_size) == (0.7, 0.3, 3)
    assert hp.discount == 1.0
    with pytest.raises(ValueError):
        Hyper(epochs=0, pretrain_epochs=1)
    with pytest.raises(ValueError):
        Hyper(epochs=1, pretrain_epochs=1, theta=1.5)
    with pytest.raises(ValueError):
        Hyper(epochs=1, pretrain_epochs=1, dtype="float16")


def test_hyper_dict_round_trip():
    hp = Hyper(epochs=5, pretrain_epochs=2, seed=9, dtype="float32",
               opt=OptConfig(learning_rate=2e-3))
    back = Hyper.from_dict(hp.to_dict())
    assert back == hp


# ---------------------------------------------------------------------------
# model bundle

def test_drlc_model_save_load_round_trip(trained, small_sim, tmp_path):
    ds, hp, c1, c2, history = trained
    norm = FeatureNormalizer.fit(ds.feature_table.values())
    model = DrlcModel(c1, c2, hp, norm, history)
    model.save(tmp_path / "m")
    back = DrlcModel.load(tmp_path / "m")
    imp = ds.impressions[0]
    for mode in ("click", "rank"):
        assert np.allclose(model.predict(imp, ds.feature_table, mode),
                           back.predict(imp, ds.feature_table, mode),
                           atol=1e-6)
    assert back.hp == hp
    assert [h["val_ll"] for h in back.history] == \
        [h["val_ll"] for h in history]
    assert np.array_equal([h["mean_cost"] for h in back.history],
                          [h["mean_cost"] for h in history], equal_nan=True)


def test_drlc_predict_modes(trained, small_sim):
    ds, hp, c1, c2, _ = trained
    norm = FeatureNormalizer.fit(ds.feature_table.values())
    imp = ds.impressions[1]
    docs = np.stack([norm.transform(ds.feature_table[(imp.query_id, d)])
                     for d in imp.doc_ids]).astype(hp.np_dtype)
    clicks = drlc_predict(c1, c2, imp, docs, hp, mode="click")
    ranks = drlc_predict(c1, c2, imp, docs, hp, mode="rank")
    assert clicks.shape == ranks.shape == (len(imp),)
    assert np.all((clicks > 0) & (clicks < 1))
    assert np.all((ranks > 0) & (ranks < 1))
    b = sequential_bias(imp.clicks, len(imp), hp.window_size)
    assert np.allclose(clicks, c1.forward(np.hstack([b, docs])), atol=1e-7)
    assert np.allclose(ranks, c2.forward(docs), atol=1e-7)
