"""Metrics and report aggregation: log-likelihood, per-rank and overall
perplexity, NDCG@k, a raw-CTR ranking baseline, and a paired sign test."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .clicklog import Dataset, GroundTruth, Impression

PROB_CLAMP = 1e-10
MAX_POSITIONS = 10


def _clamp(q: np.ndarray) -> np.ndarray:
    return np.clip(q, PROB_CLAMP, 1.0 - PROB_CLAMP)


def log_likelihood(preds, clicks) -> float:
    """Mean per-(impression, position) log-likelihood of binary clicks.

    preds/clicks: parallel sequences of per-impression vectors.
    """
    total, count = 0.0, 0
    for q, c in zip(preds, clicks, strict=True):
        q = _clamp(np.asarray(q, dtype=np.float64))
        c = np.asarray(c)
        if q.shape != c.shape:
            raise ValueError("prediction/click shape mismatch")
        total += float(np.sum(np.where(c > 0, np.log(q), np.log1p(-q))))
        count += len(c)
    return total / count


def perplexity(preds, clicks) -> tuple[np.ndarray, float]:
    """Per-rank perplexity 2^(-mean log2-likelihood) and the overall value
    (arithmetic mean over ranks that have any observations)."""
    sums = np.zeros(MAX_POSITIONS)
    counts = np.zeros(MAX_POSITIONS, dtype=np.int64)
    for q, c in zip(preds, clicks, strict=True):
        q = _clamp(np.asarray(q, dtype=np.float64))
        c = np.asarray(c)
        if q.shape != c.shape:
            raise ValueError("prediction/click shape mismatch")
        t = len(c)
        sums[:t] += np.where(c > 0, np.log2(q), np.log2(1.0 - q))
        counts[:t] += 1
    seen = counts > 0
    per_rank = np.full(MAX_POSITIONS, np.nan)
    per_rank[seen] = 2.0 ** (-sums[seen] / counts[seen])
    return per_rank, float(per_rank[seen].mean())


def ndcg_at_k(scores, clicks, k: int) -> float:
    """Binary-gain NDCG@k; ties in scores break by original rank."""
    scores = np.asarray(scores, dtype=np.float64)
    clicks = np.asarray(clicks, dtype=np.float64)
    if not (clicks > 0).any():
        raise ValueError("NDCG undefined for an impression with no clicks")
    order = np.argsort(-scores, kind="stable")
    discounts = 1.0 / np.log2(np.arange(2, len(clicks) + 2))
    dcg = float(np.sum(clicks[order][:k] * discounts[:k]))
    ideal = float(np.sum(np.sort(clicks)[::-1][:k] * discounts[:k]))
    return dcg / ideal


def mean_ndcg(score_fn, ds: Dataset, ks) -> tuple[dict[int, float], int]:
    """Mean NDCG@k over impressions with at least one click.

    score_fn(imp) -> per-position scores.  Returns ({k: mean}, number of
    clickless impressions that were excluded).
    """
    sums = {k: 0.0 for k in ks}
    used = skipped = 0
    for imp in ds.impressions:
        if not any(imp.clicks):
            skipped += 1
            continue
        scores = score_fn(imp)
        for k in ks:
            sums[k] += ndcg_at_k(scores, imp.clicks, k)
        used += 1
    if used == 0:
        raise ValueError("no impression with clicks: NDCG undefined")
    return {k: sums[k] / used for k in ks}, skipped


def sign_test(a, b) -> float:
    """Two-sided paired sign test p-value for medians of a - b."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    wins = int(np.sum(a > b))
    n = int(np.sum(a != b))
    if n == 0:
        return 1.0
    tail = sum(comb(n, i) for i in range(min(wins, n - wins) + 1))
    return min(1.0, 2.0 * tail / 2.0 ** n)


# ---------------------------------------------------------------------------
# Reference predictors

class UniformModel:
    """Predicts a constant probability everywhere (0.5 by default)."""

    def __init__(self, p: float = 0.5):
        self.p = p

    def predict_clicks(self, imp: Impression) -> np.ndarray:
        return np.full(len(imp), self.p)

    def predict_relevance(self, query_id: str, doc_id: str) -> float:
        return self.p


class CtrRanker:
    """Ranks documents by raw click-through rate over all appearances,
    ignoring position — the naive biased baseline."""

    def __init__(self, ds: Dataset, prior: float = 0.1):
        clicks: dict[tuple[str, str], int] = {}
        shows: dict[tuple[str, str], int] = {}
        for imp in ds.impressions:
            for did, c in zip(imp.doc_ids, imp.clicks):
                key = (imp.query_id, did)
                shows[key] = shows.get(key, 0) + 1
                clicks[key] = clicks.get(key, 0) + c
        self.prior = prior
        self.ctr = {k: clicks[k] / shows[k] for k in shows}

    def predict_relevance(self, query_id: str, doc_id: str) -> float:
        return self.ctr.get((query_id, doc_id), self.prior)

    def predict_clicks(self, imp: Impression) -> np.ndarray:
        return np.array([self.predict_relevance(imp.query_id, d)
                         for d in imp.doc_ids])


class OracleClickModel:
    """The simulator's own click probabilities: exam(rank) * relevance.
    The Bayes predictor on simulated logs."""

    def __init__(self, truth: GroundTruth):
        self.truth = truth

    def predict_clicks(self, imp: Impression) -> np.ndarray:
        exam = self.truth.exam_model.exam_probs(len(imp))
        rel = np.array([self.truth.relevance[(imp.query_id, d)]
                        for d in imp.doc_ids])
        return exam * rel

    def predict_relevance(self, query_id: str, doc_id: str) -> float:
        return self.truth.relevance[(query_id, doc_id)]


# ---------------------------------------------------------------------------
# Reports

@dataclass
class Report:
    model: str
    dataset: str
    log_likelihood: float
    perplexity_overall: float
    perplexity_per_rank: list[float]
    ndcg: dict[int, float]
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = {
            "model": self.model,
            "dataset": self.dataset,
            "log_likelihood": self.log_likelihood,
            "perplexity_overall": self.perplexity_overall,
            "perplexity_per_rank": self.perplexity_per_rank,
            "ndcg": {str(k): v for k, v in self.ndcg.items()},
            "metadata": self.metadata,
        }
        return json.dumps(d, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Report":
        d = json.loads(text)
        return cls(d["model"], d["dataset"], d["log_likelihood"],
                   d["perplexity_overall"], d["perplexity_per_rank"],
                   {int(k): v for k, v in d["ndcg"].items()},
                   d.get("metadata", {}))

    def csv_row(self) -> tuple[list[str], list]:
        header = ["model", "dataset", "log_likelihood", "perplexity_overall"]
        row = [self.model, self.dataset, self.log_likelihood,
               self.perplexity_overall]
        for r, v in enumerate(self.perplexity_per_rank, start=1):
            header.append(f"perplexity_rank{r}")
            row.append(v)
        for k in sorted(self.ndcg):
            header.append(f"ndcg@{k}")
            row.append(self.ndcg[k])
        header.append("config_hash")
        row.append(self.metadata.get("config_hash", ""))
        return header, row

    def write_csv(self, path) -> None:
        header, row = self.csv_row()
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerow(row)


def evaluate_model(model, ds: Dataset, ks, model_name: str,
                   dataset_name: str = "", metadata: dict | None = None,
                   feature_table=None) -> Report:
    """Metrics for any model exposing predict_clicks(imp); DRLC bundles
    (predict(imp, table, mode)) use mode="click" for LL/perplexity and
    mode="rank" for NDCG."""
    if hasattr(model, "predict"):  # DrlcModel
        table = feature_table if feature_table is not None else ds.feature_table
        def clicks_fn(imp):
            return model.predict(imp, table, "click")
        def rank_fn(imp):
            return model.predict(imp, table, "rank")
    else:
        clicks_fn = model.predict_clicks
        def rank_fn(imp):
            return np.array([model.predict_relevance(imp.query_id, d)
                             for d in imp.doc_ids])
    preds = [clicks_fn(imp) for imp in ds.impressions]
    clicks = [imp.clicks for imp in ds.impressions]
    ll = log_likelihood(preds, clicks)
    per_rank, overall = perplexity(preds, clicks)
    ndcg, skipped = mean_ndcg(rank_fn, ds, ks)
    meta = dict(metadata or {})
    meta["ndcg_skipped_clickless"] = skipped
    return Report(model_name, dataset_name, ll, overall,
                  [None if np.isnan(v) else float(v) for v in per_rank],
                  ndcg, meta)
