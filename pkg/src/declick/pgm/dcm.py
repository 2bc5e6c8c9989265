"""Dependent Click Model: counting estimators, no EM needed.

lambda_r is the probability of continuing past a click at rank r;
attractiveness is clicks over examinations, where a position counts as
examined iff its rank is at or before the impression's last click
(impressions without clicks contribute a rank-1 examination only).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..clicklog import Dataset, Impression, last_click_position
from .common import ATTRACTION_PRIOR, MAX_POSITIONS, clamp01


@dataclass
class DcmParams:
    attractiveness: dict[tuple[str, str], float]
    lam: np.ndarray  # continuation probability per rank, length MAX_POSITIONS
    prior: float = ATTRACTION_PRIOR

    def attract(self, query_id: str, doc_id: str) -> float:
        return self.attractiveness.get((query_id, doc_id), self.prior)


def train_dcm(ds: Dataset, prior: float = ATTRACTION_PRIOR) -> DcmParams:
    if not ds.impressions:
        raise ValueError("dataset is empty")
    clicks_at_rank = np.zeros(MAX_POSITIONS)
    last_at_rank = np.zeros(MAX_POSITIONS)
    num: dict[tuple[str, str], float] = {}
    den: dict[tuple[str, str], float] = {}
    for imp in ds.impressions:
        lc = last_click_position(imp)
        examined_upto = lc if lc is not None else 1
        if lc is not None:
            last_at_rank[lc - 1] += 1
        for r, (did, c) in enumerate(zip(imp.doc_ids, imp.clicks), start=1):
            if c:
                clicks_at_rank[r - 1] += 1
            if r <= examined_upto:
                key = (imp.query_id, did)
                den[key] = den.get(key, 0.0) + 1.0
                num[key] = num.get(key, 0.0) + float(c)
    lam = np.where(clicks_at_rank > 0,
                   clamp01(1.0 - np.divide(last_at_rank,
                                           np.maximum(clicks_at_rank, 1.0))),
                   0.5)
    attractiveness = {k: num.get(k, 0.0) / den[k] for k in den}
    return DcmParams(attractiveness, lam, prior)


def dcm_predict(params: DcmParams, imp: Impression) -> np.ndarray:
    """Teacher-forced click probabilities: examination continues with
    probability lambda_r after a logged click and surely after a skip."""
    probs = np.empty(len(imp))
    exam = 1.0
    for r, (did, c) in enumerate(zip(imp.doc_ids, imp.clicks), start=1):
        probs[r - 1] = exam * params.attract(imp.query_id, did)
        exam *= params.lam[r - 1] if c else 1.0
    return probs
