"""Trained-model bundle: the two networks, the hyperparameters, and the
feature normalization, saved together in one directory."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..clicklog import Dataset, Impression
from ..features import FeatureNormalizer
from ..nn import load_checkpoint, save_checkpoint, ValueNetwork
from .episode import sequential_bias
from .hyper import Hyper
from .training import train

MANIFEST_NAME = "manifest.json"
BUNDLE_FORMAT = "declick-drlc"
BUNDLE_VERSION = 1


def drlc_predict(c1: ValueNetwork, c2: ValueNetwork, imp: Impression,
                 docs: np.ndarray, hp: Hyper, mode: str) -> np.ndarray:
    """Per-position scores for one impression.

    mode="click": C1 probabilities along a teacher-forced replay (the B
    input at each cursor reflects the logged clicks at the ranks already
    visited).
    mode="rank": C2 probabilities — de-biased relevance from D alone.
    """
    if mode == "click":
        T = len(imp)
        b = sequential_bias(imp.clicks, T, hp.window_size)
        return c1.forward(np.hstack([b, docs]))
    if mode == "rank":
        return c2.forward(docs)
    raise ValueError(f"unknown prediction mode {mode!r}")


@dataclass
class DrlcModel:
    c1: ValueNetwork
    c2: ValueNetwork
    hp: Hyper
    norm: FeatureNormalizer
    history: list = field(default_factory=list)

    @classmethod
    def fit(cls, ds: Dataset, hp: Hyper) -> "DrlcModel":
        norm = FeatureNormalizer.fit(ds.feature_table.values())
        c1, c2, history = train(ds, hp, norm=norm)
        return cls(c1, c2, hp, norm, history)

    def _docs(self, imp: Impression, table) -> np.ndarray:
        rows = [self.norm.transform(table[(imp.query_id, d)])
                for d in imp.doc_ids]
        return np.ascontiguousarray(rows, dtype=self.hp.np_dtype)

    def predict(self, imp: Impression, feature_table, mode: str) -> np.ndarray:
        return drlc_predict(self.c1, self.c2, imp,
                            self._docs(imp, feature_table), self.hp, mode)

    def score_pair(self, query_id: str, doc_id: str, feature_table) -> float:
        """De-biased relevance score for a single (query, doc) pair."""
        d = self.norm.transform(feature_table[(query_id, doc_id)])
        return self.c2.forward_single(np.asarray(d, dtype=self.hp.np_dtype))

    # -- bundle I/O -----------------------------------------------------

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(self.c1, out / "c1.ckpt")
        save_checkpoint(self.c2, out / "c2.ckpt")
        manifest = {
            "format": BUNDLE_FORMAT,
            "version": BUNDLE_VERSION,
            "hyper": self.hp.to_dict(),
            "normalizer": self.norm.to_dict(),
            "history": self.history,
        }
        with open(out / MANIFEST_NAME, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, bundle_dir) -> "DrlcModel":
        src = Path(bundle_dir)
        with open(src / MANIFEST_NAME, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        if manifest.get("format") != BUNDLE_FORMAT:
            raise ValueError(f"{src} is not a {BUNDLE_FORMAT} bundle")
        if manifest.get("version") != BUNDLE_VERSION:
            raise ValueError(
                f"unsupported bundle version {manifest.get('version')}")
        hp = Hyper.from_dict(manifest["hyper"])
        norm = FeatureNormalizer.from_dict(manifest["normalizer"])
        c1 = load_checkpoint(src / "c1.ckpt", "C1", dtype=hp.np_dtype)
        c2 = load_checkpoint(src / "c2.ckpt", "C2", dtype=hp.np_dtype)
        return cls(c1, c2, hp, norm, manifest.get("history", []))
