"""Input vectors for the value networks.

Two vectors feed the networks: a 100-entry binary observation vector and
a 56-entry real document vector.  The binary layout (documented on
encode_bias) covers 10-position SERPs in the first 40 entries and keeps
the remaining 60 as zero padding.
"""
from __future__ import annotations

from enum import IntEnum

import numpy as np

BIAS_DIM = 100
DOC_DIM = 56
MAX_POSITIONS = 10


class ObservationLabel(IntEnum):
    UNOBSERVED_NO_CLICK = 0
    OBSERVED_NO_CLICK = 1
    OBSERVED_CLICK = 2

    @property
    def observed(self) -> bool:
        return self is not ObservationLabel.UNOBSERVED_NO_CLICK


def encode_bias(labels, window_start: int, t: int, T: int,
                window_size: int = 3) -> np.ndarray:
    """Encode the observation state at cursor position t into 100 bits.

    Layout (0-based indices, rank r is 1-based):
      0-9    observed flag for rank r (label is Observed*)
      10-19  click flag for rank r (label is OBSERVED_CLICK)
      20-29  current window membership flag
      30-39  one-hot of the cursor t
      40-99  zero padding

    Ranks beyond T contribute zeros everywhere.
    """
    if not 1 <= t <= T <= MAX_POSITIONS:
        raise ValueError(f"cursor t={t} out of range for T={T}")
    if not 1 <= window_start or window_start + window_size - 1 > T + window_size:
        raise ValueError(f"window_start={window_start} out of range")
    if len(labels) != T:
        raise ValueError("labels must have one entry per rank")
    v = np.zeros(BIAS_DIM, dtype=np.float64)
    for r0, lab in enumerate(labels):
        lab = ObservationLabel(lab)
        if lab.observed:
            v[r0] = 1.0
        if lab is ObservationLabel.OBSERVED_CLICK:
            v[10 + r0] = 1.0
    lo = window_start - 1
    hi = min(window_start + window_size - 1, T)
    v[20 + lo:20 + hi] = 1.0
    v[30 + t - 1] = 1.0
    return v


def encode_bias_batch(labels: np.ndarray, window_start: np.ndarray,
                      t: int, T: np.ndarray,
                      window_size: int = 3) -> np.ndarray:
    """Vectorized encode_bias for a batch sharing one cursor position.

    labels: (N, MAX_POSITIONS) int8 ObservationLabel values (entries at
    ranks > T[i] are ignored); window_start, T: (N,) ints.
    """
    n = labels.shape[0]
    v = np.zeros((n, BIAS_DIM), dtype=np.float64)
    ranks = np.arange(1, MAX_POSITIONS + 1)
    in_range = ranks[None, :] <= T[:, None]
    v[:, 0:10] = (labels >= ObservationLabel.OBSERVED_NO_CLICK) & in_range
    v[:, 10:20] = (labels == ObservationLabel.OBSERVED_CLICK) & in_range
    lo = window_start[:, None]
    hi = np.minimum(window_start + window_size - 1, T)[:, None]
    v[:, 20:30] = (ranks[None, :] >= lo) & (ranks[None, :] <= hi)
    v[np.arange(n), 30 + t - 1] = 1.0
    return v


def synth_doc_features(relevance: float, seed, n_signal: int = 8,
                       noise: float = 0.25) -> np.ndarray:
    """Synthetic 56-dim document vector carrying the given relevance.

    The first n_signal coordinates are normal(relevance, noise) clamped to
    [0, 1]; the rest are uniform noise.  Deterministic per seed.
    """
    if not 0.0 <= relevance <= 1.0:
        raise ValueError("relevance must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    v = np.empty(DOC_DIM, dtype=np.float64)
    v[:n_signal] = np.clip(rng.normal(relevance, noise, size=n_signal), 0.0, 1.0)
    v[n_signal:] = rng.random(DOC_DIM - n_signal)
    return v


class FeatureNormalizer:
    """Per-coordinate min-max scaling, fitted on the training split.

    Constant coordinates map to 0.5.  The fitted statistics persist next
    to model checkpoints so valid/test see the frozen transform.
    """

    def __init__(self, lo: np.ndarray, hi: np.ndarray):
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)

    @classmethod
    def fit(cls, vectors) -> "FeatureNormalizer":
        arr = np.asarray(list(vectors), dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise ValueError("need at least one feature vector to fit")
        return cls(arr.min(axis=0), arr.max(axis=0))

    def transform(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        span = self.hi - self.lo
        out = np.where(span > 0, (v - self.lo) / np.where(span > 0, span, 1.0), 0.5)
        return np.clip(out, 0.0, 1.0)

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureNormalizer":
        return cls(np.array(d["lo"]), np.array(d["hi"]))


def write_feature_tsv(path, table: dict[tuple[str, str], np.ndarray]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for (qid, did), vec in sorted(table.items()):
            vals = "\t".join(f"{x:.17g}" for x in vec)
            fh.write(f"{qid}\t{did}\t{vals}\n")


def read_feature_tsv(path) -> dict[tuple[str, str], np.ndarray]:
    table: dict[tuple[str, str], np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2 + DOC_DIM:
                raise ValueError(
                    f"feature TSV line {i}: expected {2 + DOC_DIM} fields, "
                    f"got {len(parts)}")
            vec = np.array([float(x) for x in parts[2:]], dtype=np.float64)
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"feature TSV line {i}: non-finite value")
            table[(parts[0], parts[1])] = vec
    return table
