"""Episode mechanics: the observation state, the labeling rule, the
reward, and the reference (per-impression) episode runner.

An episode walks the cursor t = 1..T over one impression.  At each step
the bias network scores the position under the current observation
state, the de-biased network scores its document features alone, and the
deterministic labeling rule assigns an observation label.  The
observation window starts at rank 1 and slides down one rank once the
cursor has visited all of its members.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..clicklog import Impression
from ..features import BIAS_DIM, ObservationLabel, encode_bias
from .hyper import Hyper

C2_FLOOR = 1e-6


def window_start_at(t: int, window_size: int) -> int:
    """window_start while the cursor is at t (before labeling t).

    The window advances once per step from the moment the cursor reaches
    its last member, so it trails the cursor by window_size - 1 ranks.
    """
    return max(1, t - window_size + 1)


@dataclass
class EpisodeState:
    labels: list[ObservationLabel]
    window_start: int = 1
    t: int = 0  # last labeled cursor position, 0 before the first step

    @classmethod
    def initial(cls, T: int) -> "EpisodeState":
        return cls([ObservationLabel.UNOBSERVED_NO_CLICK] * T)

    @property
    def T(self) -> int:
        return len(self.labels)


@dataclass
class EpisodeResult:
    final: EpisodeState
    costs: list[float]
    return_value: float
    c1_trace: np.ndarray = field(default_factory=lambda: np.empty(0))
    c2_trace: np.ndarray = field(default_factory=lambda: np.empty(0))


def label_position(clicked: int, c1: float, c2: float,
                   hp: Hyper) -> ObservationLabel:
    """Clicked positions are observed; unclicked ones pass the ratio test:
    c1/c2 below theta means the user likely never saw the document."""
    if clicked:
        return ObservationLabel.OBSERVED_CLICK
    if c1 / max(c2, C2_FLOOR) < hp.theta:
        return ObservationLabel.UNOBSERVED_NO_CLICK
    return ObservationLabel.OBSERVED_NO_CLICK


def reward(c_t: int, c1: float, c2: float, o_t: int, hp: Hyper) -> float:
    """Squared prediction error of both networks, the second gated by the
    observation indicator; minimized as a cost."""
    r = (c_t - c1) ** 2
    if o_t:
        r += hp.beta * (c_t - c2) ** 2
    return r


def run_episode(c1_net, c2_net, imp: Impression, docs: np.ndarray,
                hp: Hyper, rng: np.random.Generator | None = None
                ) -> EpisodeResult:
    """Reference single-impression episode.

    docs: (T, doc_dim) feature rows aligned with imp.doc_ids, already
    normalized.  Deterministic unless hp.epsilon > 0, in which case rng
    must be supplied.
    """
    T = len(imp)
    if docs.shape[0] != T:
        raise ValueError("docs must have one row per position")
    if hp.epsilon > 0 and rng is None:
        raise ValueError("epsilon-random labeling needs an rng")
    state = EpisodeState.initial(T)
    costs: list[float] = []
    c1s = np.empty(T)
    c2s = np.empty(T)
    ret = 0.0
    for t in range(1, T + 1):
        b = encode_bias(state.labels, state.window_start, t, T,
                        hp.window_size)
        c1 = c1_net.forward_single(np.concatenate([b, docs[t - 1]]))
        c2 = c2_net.forward_single(docs[t - 1])
        clicked = imp.clicks[t - 1]
        label = label_position(clicked, c1, c2, hp)
        if not clicked and hp.epsilon > 0 and rng.random() < hp.epsilon:
            label = rng.choice([ObservationLabel.UNOBSERVED_NO_CLICK,
                                ObservationLabel.OBSERVED_NO_CLICK])
        state.labels[t - 1] = label
        state.t = t
        cost = reward(clicked, c1, c2, int(label.observed), hp)
        costs.append(cost)
        ret += hp.discount ** (t - 1) * cost
        c1s[t - 1] = c1
        c2s[t - 1] = c2
        if t == state.window_start + hp.window_size - 1 and t < T:
            state.window_start += 1
    return EpisodeResult(state, costs, ret, c1s, c2s)


def final_state_bias(labels, T: int, window_size: int) -> np.ndarray:
    """B vectors for every position, rebuilt from the final labels.

    Row t-1 encodes the final observation labels with the cursor at t and
    the window where it stood when t was labeled.
    """
    return np.stack([
        encode_bias(labels, window_start_at(t, window_size), t, T,
                    window_size)
        for t in range(1, T + 1)])


def sequential_bias(clicks, T: int, window_size: int) -> np.ndarray:
    """Pretraining B vectors under the sequential-window assumption.

    At cursor t every rank the window has already covered -- the ranks
    strictly before the cursor -- counts as observed, with click flags
    taken from the log; the cursor rank itself and everything ahead of
    it are still unobserved, exactly as in a teacher-forced replay.
    """
    labels = np.full(T, ObservationLabel.UNOBSERVED_NO_CLICK, dtype=np.int8)
    rows = np.empty((T, BIAS_DIM))
    for t in range(1, T + 1):
        horizon = t - 1
        labels[:horizon] = np.where(
            np.asarray(clicks[:horizon], dtype=bool),
            ObservationLabel.OBSERVED_CLICK,
            ObservationLabel.OBSERVED_NO_CLICK)
        rows[t - 1] = encode_bias(labels, window_start_at(t, window_size),
                                  t, T, window_size)
    return rows
