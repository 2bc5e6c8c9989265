"""Dynamic Bayesian Network click model with a fixed perseverance.

The chain is truncated at the last click of each session: every rank at
or before the last click is treated as examined, clicks there are
Bernoulli draws of the attractiveness, and the user continues past a
clicked document with probability (1 - satisfy) * persevere (plain
persevere past a skipped one).  The session ending at the last click
contributes satisfy + (1 - satisfy) * (1 - persevere).  Sessions without
clicks carry no information under this truncation and are skipped.

Attractiveness then has a closed-form maximum-likelihood estimate;
satisfaction is the only latent quantity and is fitted by EM.  With
persevere = 1 the EM fixed point reduces to the simplified closed-form
counting estimator (attract = clicks / appearances-at-or-before-last-
click, satisfy = last-clicks / clicks).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..clicklog import Dataset, Impression
from .common import ATTRACTION_PRIOR, CompiledLog, bernoulli_ll, compile_log

INIT_SATISFY = 0.5
SATISFY_FALLBACK = 0.5
_TINY = 1e-10


@dataclass
class DbnParams:
    attract: dict[tuple[str, str], float]
    satisfy: dict[tuple[str, str], float]
    persevere: float
    prior: float = ATTRACTION_PRIOR

    def attraction(self, query_id: str, doc_id: str) -> float:
        return self.attract.get((query_id, doc_id), self.prior)

    def satisfaction(self, query_id: str, doc_id: str) -> float:
        return self.satisfy.get((query_id, doc_id), SATISFY_FALLBACK)


def _log(x: np.ndarray | float) -> np.ndarray | float:
    return np.log(np.clip(x, _TINY, None))


def train_dbn(ds: Dataset, iters: int = 50,
              persevere: float = 0.9) -> tuple[DbnParams, list]:
    """Returns the fitted parameters and the full-data log-likelihood
    trace (one entry per EM iteration, evaluated after the M-step)."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if not 0.0 <= persevere <= 1.0:
        raise ValueError("persevere must lie in [0, 1]")
    log = compile_log(ds)
    last = log.last_click[log.imp]
    keep = log.rank <= last
    pair = log.pair[keep]
    click = log.click[keep]
    is_last = log.rank[keep] == last[keep]
    gamma = persevere

    appearances = np.bincount(pair, minlength=log.n_pairs).astype(float)
    clicks = np.bincount(pair, click, minlength=log.n_pairs)
    last_clicks = np.bincount(pair[is_last], minlength=log.n_pairs).astype(float)
    seen = appearances > 0
    clicked = clicks > 0

    attract = np.full(log.n_pairs, ATTRACTION_PRIOR)
    attract[seen] = clicks[seen] / appearances[seen]
    # Constant pieces of the likelihood: the Bernoulli click terms and
    # one persevere factor per continued position (everything before the
    # last click).
    ll_const = (bernoulli_ll(attract[pair], click)
                + float(np.sum(~is_last)) * float(_log(gamma)))
    mid_click = pair[(click > 0) & ~is_last]

    satisfy = np.full(log.n_pairs, INIT_SATISFY)
    ll_trace = []
    for _ in range(iters):
        # E-step: the user was satisfied at the last click with posterior
        # s / (s + (1-s)(1-gamma)); intermediate clicks imply continuation.
        stop = satisfy + (1.0 - satisfy) * (1.0 - gamma)
        resp = np.where(stop > 0, satisfy / np.where(stop > 0, stop, 1.0), 0.0)
        new = satisfy.copy()
        new[clicked] = last_clicks[clicked] * resp[clicked] / clicks[clicked]
        satisfy = new
        stop = satisfy + (1.0 - satisfy) * (1.0 - gamma)
        ll_trace.append(ll_const
                        + float(np.sum(_log(1.0 - satisfy[mid_click])))
                        + float(np.sum(_log(stop[pair[is_last]]))))

    attract_map = {k: float(attract[j])
                   for k, j in log.pair_of.items() if seen[j]}
    satisfy_map = {k: float(satisfy[j])
                   for k, j in log.pair_of.items() if clicked[j]}
    return DbnParams(attract_map, satisfy_map, persevere), ll_trace


def dbn_predict(params: DbnParams, imp: Impression) -> np.ndarray:
    """Teacher-forced: examination after rank r is persevere, times
    (1 - satisfy) when the logged session clicked at r."""
    probs = np.empty(len(imp))
    exam = 1.0
    for r, (did, c) in enumerate(zip(imp.doc_ids, imp.clicks)):
        probs[r] = exam * params.attraction(imp.query_id, did)
        exam *= params.persevere
        if c:
            exam *= 1.0 - params.satisfaction(imp.query_id, did)
    return probs
