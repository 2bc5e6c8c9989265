"""Pretraining and the RL training loop for the C1/C2 network pair.

Episodes within an epoch all run against frozen snapshots of the
networks taken at the start of the epoch, position by position in
lockstep, which turns the per-impression forward passes into large
batched ones without changing any individual episode (each episode only
ever reads its own state and the frozen networks).  Gradient steps are
then applied in a fixed shuffled order, so runs are deterministic.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from ..clicklog import ClickLogError, Dataset, last_click_position
from ..features import (BIAS_DIM, MAX_POSITIONS, FeatureNormalizer,
                        ObservationLabel)
from ..nn import DivergenceError, SgdOptimizer, ValueNetwork
from .episode import C2_FLOOR, run_episode, window_start_at
from .hyper import Hyper

_CHUNK = 8192
_LL_CLAMP = 1e-10


class TrainingError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Compiled episode arrays: one row per impression, padded to MAX_POSITIONS,
# with document features deduplicated through a (query, doc) index.

@dataclass
class CompiledEpisodes:
    impressions: list
    T: np.ndarray        # (N,) lengths
    clicks: np.ndarray   # (N, MAX_POSITIONS) int8, zero-padded
    docidx: np.ndarray   # (N, MAX_POSITIONS) int32 into docs, 0-padded
    docs: np.ndarray     # (n_pairs, doc_dim) normalized features

    def __len__(self):
        return len(self.T)

    @property
    def position_mask(self) -> np.ndarray:
        return np.arange(1, MAX_POSITIONS + 1)[None, :] <= self.T[:, None]


def compile_episodes(ds: Dataset, norm: FeatureNormalizer,
                     dtype) -> CompiledEpisodes:
    ds.check_features()
    pair_of: dict[tuple[str, str], int] = {}
    rows: list[np.ndarray] = []
    n = len(ds.impressions)
    T = np.zeros(n, dtype=np.int64)
    clicks = np.zeros((n, MAX_POSITIONS), dtype=np.int8)
    docidx = np.zeros((n, MAX_POSITIONS), dtype=np.int32)
    for i, imp in enumerate(ds.impressions):
        T[i] = len(imp)
        clicks[i, :len(imp)] = imp.clicks
        for r0, did in enumerate(imp.doc_ids):
            key = (imp.query_id, did)
            j = pair_of.get(key)
            if j is None:
                j = pair_of[key] = len(rows)
                rows.append(norm.transform(ds.feature_table[key]))
            docidx[i, r0] = j
    docs = np.ascontiguousarray(np.stack(rows), dtype=dtype)
    return CompiledEpisodes(ds.impressions, T, clicks, docidx, docs)


def _bias_rows(labels: np.ndarray, ws: np.ndarray, t: np.ndarray,
               T: np.ndarray, window_size: int) -> np.ndarray:
    """encode_bias for rows with per-row cursor and window positions."""
    n = len(t)
    v = np.zeros((n, BIAS_DIM))
    ranks = np.arange(1, MAX_POSITIONS + 1)[None, :]
    in_range = ranks <= T[:, None]
    v[:, 0:10] = (labels >= ObservationLabel.OBSERVED_NO_CLICK) & in_range
    v[:, 10:20] = (labels == ObservationLabel.OBSERVED_CLICK) & in_range
    hi = np.minimum(ws + window_size - 1, T)
    v[:, 20:30] = (ranks >= ws[:, None]) & (ranks <= hi[:, None])
    v[np.arange(n), 30 + t - 1] = 1.0
    return v


def _forward_chunked(net: ValueNetwork, x: np.ndarray) -> np.ndarray:
    out = np.empty(len(x))
    for lo in range(0, len(x), _CHUNK):
        out[lo:lo + _CHUNK] = net.forward(x[lo:lo + _CHUNK])
    return out


def _c2_values(c2_net: ValueNetwork, ce: CompiledEpisodes) -> np.ndarray:
    """C2 scores for every unique (query, doc) pair, computed once."""
    return _forward_chunked(c2_net, ce.docs)


# ---------------------------------------------------------------------------
# Episode execution

def run_episodes_batch(c1_net: ValueNetwork, c2_net: ValueNetwork,
                       ce: CompiledEpisodes, hp: Hyper
                       ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All episodes in lockstep; returns (labels, costs, c1_trace), each
    (N, MAX_POSITIONS) with zeros past each episode's length."""
    if hp.epsilon > 0:
        return _run_episodes_reference(c1_net, c2_net, ce, hp)
    n = len(ce)
    labels = np.zeros((n, MAX_POSITIONS), dtype=np.int8)
    costs = np.zeros((n, MAX_POSITIONS))
    c1_trace = np.zeros((n, MAX_POSITIONS))
    c2u = _c2_values(c2_net, ce)
    for t in range(1, MAX_POSITIONS + 1):
        act = np.nonzero(ce.T >= t)[0]
        if not len(act):
            break
        ws = np.full(len(act), window_start_at(t, hp.window_size))
        b = _bias_rows(labels[act], ws, np.full(len(act), t), ce.T[act],
                       hp.window_size)
        d = ce.docs[ce.docidx[act, t - 1]]
        c1 = _forward_chunked(c1_net, np.hstack([b, d]))
        c2 = c2u[ce.docidx[act, t - 1]]
        c = ce.clicks[act, t - 1].astype(np.float64)
        lab = np.where(
            c > 0, ObservationLabel.OBSERVED_CLICK,
            np.where(c1 / np.maximum(c2, C2_FLOOR) < hp.theta,
                     ObservationLabel.UNOBSERVED_NO_CLICK,
                     ObservationLabel.OBSERVED_NO_CLICK)).astype(np.int8)
        labels[act, t - 1] = lab
        observed = (lab >= ObservationLabel.OBSERVED_NO_CLICK)
        costs[act, t - 1] = (c - c1) ** 2 + hp.beta * observed * (c - c2) ** 2
        c1_trace[act, t - 1] = c1
    return labels, costs, c1_trace


def _run_episodes_reference(c1_net, c2_net, ce: CompiledEpisodes, hp: Hyper):
    """Per-impression fallback, used when epsilon-random labeling is on."""
    n = len(ce)
    labels = np.zeros((n, MAX_POSITIONS), dtype=np.int8)
    costs = np.zeros((n, MAX_POSITIONS))
    c1_trace = np.zeros((n, MAX_POSITIONS))
    for i, imp in enumerate(ce.impressions):
        rng = np.random.default_rng(
            np.random.SeedSequence([0xE95, hp.seed, i]))
        docs = ce.docs[ce.docidx[i, :ce.T[i]]]
        res = run_episode(c1_net, c2_net, imp, docs, hp, rng)
        labels[i, :ce.T[i]] = [int(l) for l in res.final.labels]
        costs[i, :ce.T[i]] = res.costs
        c1_trace[i, :ce.T[i]] = res.c1_trace
    return labels, costs, c1_trace


# ---------------------------------------------------------------------------
# Minibatch fitting

def _fit_epoch(net: ValueNetwork, opt: SgdOptimizer, build_x, y: np.ndarray,
               rng: np.random.Generator) -> float:
    """One shuffled pass of minibatch steps; returns the mean loss."""
    order = rng.permutation(len(y))
    total = 0.0
    bs = opt.cfg.batch_size
    for lo in range(0, len(order), bs):
        idx = order[lo:lo + bs]
        net.forward(build_x(idx), train=True)
        grads, loss = net.backward(y[idx])
        opt.step(net, grads)
        total += loss * len(idx)
    return total / len(y)


def _positions(ce: CompiledEpisodes) -> tuple[np.ndarray, np.ndarray]:
    """Flat (impression, cursor) index pairs for every real position."""
    i, t0 = np.nonzero(ce.position_mask)
    return i, t0 + 1


def _c1_builder(ce: CompiledEpisodes, labels3: np.ndarray,
                pos_i: np.ndarray, pos_t: np.ndarray, hp: Hyper):
    """Minibatch inputs for C1: B from the given labels, concatenated with
    the position's document features.  labels3 is indexed by (impression,
    cursor-1) so it works for both the sequential pretraining labels and
    a broadcast copy of the final episode labels."""
    def build(idx):
        i, t = pos_i[idx], pos_t[idx]
        ws = np.maximum(1, t - hp.window_size + 1)
        b = _bias_rows(labels3[i, t - 1], ws, t, ce.T[i], hp.window_size)
        return np.hstack([b, ce.docs[ce.docidx[i, t - 1]]])
    return build


def _sequential_labels(ce: CompiledEpisodes, hp: Hyper) -> np.ndarray:
    """(N, T, T) labels under the pretraining sequential-window assumption:
    at cursor t, the ranks the window has already covered (strictly before
    the cursor) are observed; the cursor and everything ahead are not."""
    ranks = np.arange(1, MAX_POSITIONS + 1)
    observed = ranks[None, None, :] < ranks[None, :, None]  # (N, t, rank)
    observed = np.broadcast_to(observed, (len(ce.T),) + observed.shape[1:])
    clicked = ce.clicks[:, None, :] > 0
    return np.where(observed,
                    np.where(clicked, ObservationLabel.OBSERVED_CLICK,
                             ObservationLabel.OBSERVED_NO_CLICK),
                    ObservationLabel.UNOBSERVED_NO_CLICK).astype(np.int8)


# ---------------------------------------------------------------------------
# Pretraining

def c2_pretrain_positions(imp, hp: Hyper) -> list[int]:
    """1-based positions of one impression that feed the C2 warm start:
    those strictly before the last click (at or before it when
    hp.c2_pretrain_inclusive is set); clickless impressions give none."""
    last = last_click_position(imp) or 0
    bound = last + (1 if hp.c2_pretrain_inclusive else 0)
    return [t for t in range(1, len(imp) + 1) if t < bound]


def pretrain(ds: Dataset, hp: Hyper,
             norm: FeatureNormalizer | None = None
             ) -> tuple[ValueNetwork, ValueNetwork]:
    """Supervised warm start: C1 on every position with sequential-window
    observation states, C2 on positions strictly before the last click."""
    norm = norm or FeatureNormalizer.fit(ds.feature_table.values())
    ce = compile_episodes(ds, norm, hp.np_dtype)
    c1 = ValueNetwork("C1", hp.seed, dtype=hp.np_dtype)
    c2 = ValueNetwork("C2", hp.seed, dtype=hp.np_dtype)

    pos_i, pos_t = _positions(ce)
    y1 = ce.clicks[pos_i, pos_t - 1].astype(np.intp)
    seq_labels = _sequential_labels(ce, hp)

    last = np.array([last_click_position(imp) or 0 for imp in ce.impressions])
    bound = last[pos_i] + (1 if hp.c2_pretrain_inclusive else 0)
    keep = pos_t < bound
    if not keep.any():
        raise TrainingError(
            "C2 pretraining set is empty: no impression has a click")
    c2_rows = ce.docs[ce.docidx[pos_i[keep], pos_t[keep] - 1]]
    y2 = y1[keep]

    opt1, opt2 = SgdOptimizer(hp.opt), SgdOptimizer(hp.opt)
    build1 = _c1_builder(ce, seq_labels, pos_i, pos_t, hp)
    for epoch in range(hp.pretrain_epochs):
        rng = np.random.default_rng(
            np.random.SeedSequence([0x93E, hp.seed, epoch]))
        _fit_epoch(c1, opt1, build1, y1, rng)
        _fit_epoch(c2, opt2, lambda idx: c2_rows[idx], y2, rng)
    return c1, c2


# ---------------------------------------------------------------------------
# Training

def _state(net: ValueNetwork) -> dict[str, np.ndarray]:
    snap = {name: arr.copy() for name, arr in net.named_params()}
    for i, bn in enumerate(net.batchnorms()):
        snap[f"bn{i}.running_mean"] = bn.running_mean.copy()
        snap[f"bn{i}.running_var"] = bn.running_var.copy()
    return snap


def _load_state(net: ValueNetwork, snap: dict[str, np.ndarray]):
    for name, arr in net.named_params():
        arr[...] = snap[name]
    for i, bn in enumerate(net.batchnorms()):
        bn.running_mean[...] = snap[f"bn{i}.running_mean"]
        bn.running_var[...] = snap[f"bn{i}.running_var"]


def replay_c1_probs(c1: ValueNetwork, ce: CompiledEpisodes,
                    hp: Hyper) -> np.ndarray:
    """(N, MAX_POSITIONS) C1 click probabilities under teacher-forced
    replay: the B input at cursor t reflects the logged clicks at the
    ranks already visited (strictly before t), nothing else."""
    pos_i, pos_t = _positions(ce)
    build = _c1_builder(ce, _sequential_labels(ce, hp), pos_i, pos_t, hp)
    probs = np.zeros((len(ce.T), MAX_POSITIONS))
    idx = np.arange(len(pos_i))
    probs[pos_i, pos_t - 1] = _forward_chunked(c1, build(idx))
    return probs


def validation_ll(c1: ValueNetwork, c2: ValueNetwork, ce: CompiledEpisodes,
                  hp: Hyper) -> float:
    """Mean per-position log-likelihood of the logged clicks under the C1
    probabilities produced by teacher-forced replay.  (c2 is accepted for
    signature stability; the metric scores the click predictor alone.)"""
    del c2
    c1_trace = replay_c1_probs(c1, ce, hp)
    mask = ce.position_mask
    q = np.clip(c1_trace[mask], _LL_CLAMP, 1.0 - _LL_CLAMP)
    c = ce.clicks[mask]
    return float(np.mean(np.where(c > 0, np.log(q), np.log1p(-q))))


def split_valid(ds: Dataset, hp: Hyper) -> tuple[Dataset, Dataset]:
    """Deterministic session-level holdout of hp.valid_fraction."""
    sessions = list(dict.fromkeys(imp.session_id for imp in ds.impressions))
    if len(sessions) < 2:
        raise ClickLogError("need at least 2 sessions for a validation split")
    rng = np.random.default_rng(np.random.SeedSequence([0x5917, hp.seed]))
    perm = rng.permutation(len(sessions))
    n_valid = max(1, int(round(hp.valid_fraction * len(sessions))))
    held = {sessions[i] for i in perm[:n_valid]}
    tr = [imp for imp in ds.impressions if imp.session_id not in held]
    va = [imp for imp in ds.impressions if imp.session_id in held]
    return (Dataset(tr, ds.feature_table), Dataset(va, ds.feature_table))


def train(ds: Dataset, hp: Hyper,
          nets: tuple[ValueNetwork, ValueNetwork] | None = None,
          norm: FeatureNormalizer | None = None
          ) -> tuple[ValueNetwork, ValueNetwork, list[dict]]:
    """Full training: internal validation split, pretraining (unless nets
    are supplied), then per-epoch episode rollout and alternating network
    updates with early stopping on validation log-likelihood.  The
    returned C1 carries the best-validation epoch's parameters."""
    norm = norm or FeatureNormalizer.fit(ds.feature_table.values())
    tr, va = split_valid(ds, hp)
    c1, c2 = nets if nets is not None else pretrain(tr, hp, norm)
    ce_tr = compile_episodes(tr, norm, hp.np_dtype)
    ce_va = compile_episodes(va, norm, hp.np_dtype)

    pos_i, pos_t = _positions(ce_tr)
    y1 = ce_tr.clicks[pos_i, pos_t - 1].astype(np.intp)
    opt1, opt2 = SgdOptimizer(hp.opt), SgdOptimizer(hp.opt)

    best_ll = validation_ll(c1, c2, ce_va, hp)
    best = _state(c1)
    history: list[dict] = [
        {"epoch": 0, "mean_cost": float("nan"), "val_ll": best_ll}]
    stale = 0
    for epoch in range(1, hp.epochs + 1):
        frozen1, frozen2 = copy.deepcopy(c1), copy.deepcopy(c2)
        try:
            labels, costs, _ = run_episodes_batch(frozen1, frozen2, ce_tr, hp)
            mean_cost = float(costs[ce_tr.position_mask].mean())

            rng = np.random.default_rng(
                np.random.SeedSequence([0x7A11, hp.seed, epoch]))
            # C1: every position, observation state = final episode labels.
            labels3 = np.repeat(labels[:, None, :], MAX_POSITIONS, axis=1)
            build1 = _c1_builder(ce_tr, labels3, pos_i, pos_t, hp)
            _fit_epoch(c1, opt1, build1, y1, rng)
            # C2: only positions whose final label says "observed".
            obs = labels[pos_i, pos_t - 1] >= ObservationLabel.OBSERVED_NO_CLICK
            oi, ot = pos_i[obs], pos_t[obs]
            rows = ce_tr.docs[ce_tr.docidx[oi, ot - 1]]
            if len(rows):
                _fit_epoch(c2, opt2, lambda idx: rows[idx], y1[obs], rng)

            val_ll = validation_ll(c1, c2, ce_va, hp)
        except DivergenceError as exc:
            raise DivergenceError(
                f"training diverged at epoch {epoch}: {exc}") from exc
        history.append(
            {"epoch": epoch, "mean_cost": mean_cost, "val_ll": val_ll})
        if val_ll > best_ll:
            best_ll = val_ll
            best = _state(c1)
            stale = 0
        else:
            stale += 1
            if stale >= hp.patience:
                break
    # C1 is rolled back to its best-validation parameters; C2's quality is
    # not what the validation log-likelihood measures, so it keeps the
    # final-epoch parameters.
    _load_state(c1, best)
    return c1, c2, history
