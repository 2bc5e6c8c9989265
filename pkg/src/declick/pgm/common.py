"""Shared machinery for the PGM click models: compiled observation arrays,
parameter serialization, and the teacher-forced prediction dispatch."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..clicklog import Dataset, Impression, last_click_position

ATTRACTION_PRIOR = 0.1
MAX_POSITIONS = 10


@dataclass
class CompiledLog:
    """Flat per-(impression, position) observation arrays.

    pair_of: maps (query_id, doc_id) to a dense index; for every
    observation, `pair` is that index, `rank` the 1-based position,
    `prev_click` the rank of the latest earlier click (0 when none),
    `click` the logged bit, and `imp` the impression index.
    """

    pair_of: dict[tuple[str, str], int]
    pair: np.ndarray
    rank: np.ndarray
    prev_click: np.ndarray
    click: np.ndarray
    imp: np.ndarray
    last_click: np.ndarray  # per impression, 0 when no click
    imp_len: np.ndarray

    @property
    def n_pairs(self) -> int:
        return len(self.pair_of)


def compile_log(ds: Dataset) -> CompiledLog:
    if not ds.impressions:
        raise ValueError("dataset is empty")
    pair_of: dict[tuple[str, str], int] = {}
    pair, rank, prev, click, imp_idx = [], [], [], [], []
    last_clicks, imp_lens = [], []
    for i, imp in enumerate(ds.impressions):
        lc = last_click_position(imp) or 0
        last_clicks.append(lc)
        imp_lens.append(len(imp))
        p = 0
        for r, (did, c) in enumerate(zip(imp.doc_ids, imp.clicks), start=1):
            key = (imp.query_id, did)
            j = pair_of.setdefault(key, len(pair_of))
            pair.append(j)
            rank.append(r)
            prev.append(p)
            click.append(c)
            imp_idx.append(i)
            if c:
                p = r
    return CompiledLog(
        pair_of,
        np.asarray(pair, dtype=np.int64),
        np.asarray(rank, dtype=np.int64),
        np.asarray(prev, dtype=np.int64),
        np.asarray(click, dtype=np.float64),
        np.asarray(imp_idx, dtype=np.int64),
        np.asarray(last_clicks, dtype=np.int64),
        np.asarray(imp_lens, dtype=np.int64),
    )


def clamp01(x):
    return np.clip(x, 0.0, 1.0)


# ---------------------------------------------------------------------------
# TSV serialization: `key \t value` rows after a header comment.
# Composite keys join their parts with "|"; simulator ids never contain it.

def write_params_tsv(path, model_name: str, iterations: int,
                     rows: list[tuple[str, float]]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#model={model_name} iterations={iterations}\n")
        for key, value in rows:
            fh.write(f"{key}\t{value:.17g}\n")


def read_params_tsv(path) -> tuple[str, int, dict[str, float]]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("#model="):
            raise ValueError("parameter TSV lacks a model header")
        fields = dict(kv.split("=", 1) for kv in header[1:].split())
        rows: dict[str, float] = {}
        for line in fh:
            if not line.strip():
                continue
            key, value = line.rstrip("\n").split("\t")
            rows[key] = float(value)
    return fields["model"], int(fields["iterations"]), rows


def bernoulli_ll(p: np.ndarray, c: np.ndarray) -> float:
    p = np.clip(p, 1e-10, 1.0 - 1e-10)
    return float(np.sum(c * np.log(p) + (1.0 - c) * np.log(1.0 - p)))
