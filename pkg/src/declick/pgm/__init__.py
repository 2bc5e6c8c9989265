"""Baseline probabilistic click models (DCM, UBM, DBN).

`PgmModel` wraps the three parameter types behind a uniform train /
predict / save / load interface so evaluation and CLI code can treat
them interchangeably.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..clicklog import Dataset, Impression
from .common import (ATTRACTION_PRIOR, MAX_POSITIONS, bernoulli_ll,
                     compile_log, read_params_tsv, write_params_tsv)
from .dbn import DbnParams, dbn_predict, train_dbn
from .dcm import DcmParams, dcm_predict, train_dcm
from .ubm import UbmParams, train_ubm, ubm_predict

PGM_KINDS = ("dcm", "ubm", "dbn")


def pgm_predict(params, imp: Impression) -> np.ndarray:
    """Teacher-forced per-position click probabilities."""
    if isinstance(params, DcmParams):
        return dcm_predict(params, imp)
    if isinstance(params, UbmParams):
        return ubm_predict(params, imp)
    if isinstance(params, DbnParams):
        return dbn_predict(params, imp)
    raise TypeError(f"not a PGM parameter store: {type(params).__name__}")


@dataclass
class PgmModel:
    kind: str
    params: DcmParams | UbmParams | DbnParams
    iterations: int
    ll_trace: list | None = None

    @classmethod
    def train(cls, kind: str, ds: Dataset, iters: int = 50,
              persevere: float = 0.9) -> "PgmModel":
        if kind == "dcm":
            return cls(kind, train_dcm(ds), 1)
        if kind == "ubm":
            params, trace = train_ubm(ds, iters)
            return cls(kind, params, iters, trace)
        if kind == "dbn":
            params, trace = train_dbn(ds, iters, persevere)
            return cls(kind, params, iters, trace)
        raise ValueError(f"unknown PGM kind: {kind!r}")

    def predict_clicks(self, imp: Impression) -> np.ndarray:
        return pgm_predict(self.params, imp)

    def predict_relevance(self, query_id: str, doc_id: str) -> float:
        """Attraction-style relevance proxy for ranking metrics."""
        p = self.params
        if isinstance(p, DcmParams):
            return p.attract(query_id, doc_id)
        if isinstance(p, UbmParams):
            return p.attract(query_id, doc_id)
        return p.attraction(query_id, doc_id)

    # -- serialization ------------------------------------------------

    def save(self, path) -> None:
        rows: list[tuple[str, float]] = []
        p = self.params
        if self.kind == "dcm":
            for r, lam in enumerate(p.lam, start=1):
                rows.append((f"lambda|{r}", float(lam)))
            for (q, d), v in sorted(p.attractiveness.items()):
                rows.append((f"attract|{q}|{d}", v))
        elif self.kind == "ubm":
            for r in range(1, MAX_POSITIONS + 1):
                for rp in range(r):
                    rows.append((f"exam|{r}|{rp}", float(p.exam[r - 1, rp])))
            for (q, d), v in sorted(p.alpha.items()):
                rows.append((f"alpha|{q}|{d}", v))
        else:
            rows.append(("persevere", p.persevere))
            for (q, d), v in sorted(p.attract.items()):
                rows.append((f"attract|{q}|{d}", v))
            for (q, d), v in sorted(p.satisfy.items()):
                rows.append((f"satisfy|{q}|{d}", v))
        write_params_tsv(path, self.kind, self.iterations, rows)

    @classmethod
    def load(cls, path) -> "PgmModel":
        kind, iterations, rows = read_params_tsv(path)
        if kind not in PGM_KINDS:
            raise ValueError(f"unknown PGM kind in header: {kind!r}")
        if kind == "dcm":
            lam = np.full(MAX_POSITIONS, 0.5)
            attractiveness: dict[tuple[str, str], float] = {}
            for key, value in rows.items():
                name, *parts = key.split("|")
                if name == "lambda":
                    lam[int(parts[0]) - 1] = value
                else:
                    attractiveness[(parts[0], parts[1])] = value
            params: DcmParams | UbmParams | DbnParams = DcmParams(
                attractiveness, lam)
        elif kind == "ubm":
            exam = np.full((MAX_POSITIONS, MAX_POSITIONS), 0.5)
            alpha: dict[tuple[str, str], float] = {}
            for key, value in rows.items():
                name, *parts = key.split("|")
                if name == "exam":
                    exam[int(parts[0]) - 1, int(parts[1])] = value
                else:
                    alpha[(parts[0], parts[1])] = value
            params = UbmParams(alpha, exam)
        else:
            attract: dict[tuple[str, str], float] = {}
            satisfy: dict[tuple[str, str], float] = {}
            persevere = 0.9
            for key, value in rows.items():
                name, *parts = key.split("|")
                if name == "persevere":
                    persevere = value
                elif name == "attract":
                    attract[(parts[0], parts[1])] = value
                else:
                    satisfy[(parts[0], parts[1])] = value
            params = DbnParams(attract, satisfy, persevere)
        return cls(kind, params, iterations)


__all__ = [
    "ATTRACTION_PRIOR", "MAX_POSITIONS", "PGM_KINDS", "PgmModel",
    "DcmParams", "UbmParams", "DbnParams",
    "train_dcm", "train_ubm", "train_dbn",
    "dcm_predict", "ubm_predict", "dbn_predict", "pgm_predict",
    "bernoulli_ll", "compile_log",
]
