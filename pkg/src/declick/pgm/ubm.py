"""User Browsing Model with the standard EM updates.

Examination depends on (rank, rank of the previous click); attraction is
per (query, document).  The posterior responsibilities for a non-clicked
observation are a(1-e)/(1-ae) for attraction and e(1-a)/(1-ae) for
examination; clicked observations pin both to 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..clicklog import Dataset, Impression
from .common import (ATTRACTION_PRIOR, MAX_POSITIONS, CompiledLog,
                     bernoulli_ll, compile_log)

INIT_VALUE = 0.5


@dataclass
class UbmParams:
    alpha: dict[tuple[str, str], float]
    exam: np.ndarray  # exam[r-1, r'] for r' < r <= MAX_POSITIONS
    prior: float = ATTRACTION_PRIOR

    def attract(self, query_id: str, doc_id: str) -> float:
        return self.alpha.get((query_id, doc_id), self.prior)


def _em(log: CompiledLog, iters: int) -> tuple[np.ndarray, np.ndarray, list]:
    alpha = np.full(log.n_pairs, INIT_VALUE)
    exam = np.full((MAX_POSITIONS, MAX_POSITIONS), INIT_VALUE)
    cell = log.rank - 1, log.prev_click
    ll_trace = []
    for _ in range(iters):
        a = alpha[log.pair]
        e = exam[cell]
        # a*e can hit 1 exactly on degenerate cells (every observation
        # clicked); those rows have c=1 and ignore the ratio anyway.
        denom = np.maximum(1.0 - a * e, 1e-12)
        c = log.click
        resp_a = c + (1.0 - c) * a * (1.0 - e) / denom
        resp_e = c + (1.0 - c) * e * (1.0 - a) / denom
        alpha = (np.bincount(log.pair, resp_a, minlength=log.n_pairs)
                 / np.bincount(log.pair, minlength=log.n_pairs))
        cell_flat = cell[0] * MAX_POSITIONS + cell[1]
        size = MAX_POSITIONS * MAX_POSITIONS
        num = np.bincount(cell_flat, resp_e, minlength=size)
        cnt = np.bincount(cell_flat, minlength=size)
        new_exam = exam.reshape(-1).copy()
        seen = cnt > 0
        new_exam[seen] = num[seen] / cnt[seen]
        exam = new_exam.reshape(MAX_POSITIONS, MAX_POSITIONS)
        ll_trace.append(bernoulli_ll(alpha[log.pair] * exam[cell], c))
    return alpha, exam, ll_trace


def train_ubm(ds: Dataset, iters: int = 50) -> tuple[UbmParams, list]:
    """Returns the fitted parameters and the per-iteration full-data
    log-likelihood trace (evaluated after each M-step)."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    log = compile_log(ds)
    alpha, exam, ll_trace = _em(log, iters)
    alpha_map = {k: float(alpha[j]) for k, j in log.pair_of.items()}
    return UbmParams(alpha_map, exam), ll_trace


def ubm_predict(params: UbmParams, imp: Impression) -> np.ndarray:
    """Teacher-forced: the previous-click rank comes from the logged clicks."""
    probs = np.empty(len(imp))
    prev = 0
    for r, (did, c) in enumerate(zip(imp.doc_ids, imp.clicks), start=1):
        probs[r - 1] = (params.attract(imp.query_id, did)
                        * params.exam[r - 1, prev])
        if c:
            prev = r
    return probs
