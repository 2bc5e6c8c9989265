"""Click-log data model, parsers/writers, splitting, and the biased-log simulator.

Canonical log line (UTF-8, tab-separated, LF):

    session_id \t query_id \t doc1|doc2|... \t 0100

The interactive CSV format mirrors an e-commerce search log: one row per
query with a pipe-separated impression list and comma-separated clicked
skus.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np

from . import features as _features

MAX_POSITIONS = 10

INTERACTIVE_COLUMNS = [
    "visitor ID", "session id", "date", "time", "searchterm",
    "click sku", "atc sku", "order sku", "product impression",
]


class ClickLogError(ValueError):
    """Malformed log content (parse errors carry the offending line number)."""


@dataclass(frozen=True)
class Impression:
    """One logged SERP: a query, its ranked documents, and the click bits."""

    session_id: str
    query_id: str
    doc_ids: tuple[str, ...]
    clicks: tuple[int, ...]

    def __post_init__(self):
        if len(self.doc_ids) == 0:
            raise ClickLogError("impression has no documents")
        if len(self.clicks) != len(self.doc_ids):
            raise ClickLogError(
                f"click count {len(self.clicks)} != doc count {len(self.doc_ids)}")
        if len(self.doc_ids) > MAX_POSITIONS:
            raise ClickLogError(
                f"{len(self.doc_ids)} positions exceed max {MAX_POSITIONS}")
        if any(c not in (0, 1) for c in self.clicks):
            raise ClickLogError("clicks must be 0/1")

    def __len__(self) -> int:
        return len(self.doc_ids)


@dataclass
class Dataset:
    """Impressions plus the (query_id, doc_id) -> feature-vector table."""

    impressions: list[Impression]
    feature_table: dict[tuple[str, str], np.ndarray] = field(default_factory=dict)

    def check_features(self):
        """Every referenced pair must have a feature row before training."""
        missing = [(imp.query_id, d)
                   for imp in self.impressions for d in imp.doc_ids
                   if (imp.query_id, d) not in self.feature_table]
        if missing:
            raise ClickLogError(
                f"{len(missing)} (query, doc) pairs lack features, "
                f"first: {missing[0]}")

    def __len__(self) -> int:
        return len(self.impressions)


@dataclass(frozen=True)
class ExamModel:
    """Tagged examination process: rank_decay, cascade, or window."""

    kind: str
    params: tuple[tuple[str, float], ...]

    KINDS = ("rank_decay", "cascade", "window")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ClickLogError(f"unknown exam model {self.kind!r}")

    def param(self, name: str) -> float:
        for k, v in self.params:
            if k == name:
                return v
        raise KeyError(name)

    def exam_probs(self, positions: int) -> np.ndarray:
        """Examination probability for ranks 1..positions."""
        r = np.arange(1, positions + 1, dtype=np.float64)
        if self.kind == "rank_decay":
            p = r ** (-self.param("exponent"))
        elif self.kind == "cascade":
            p = self.param("continuation") ** (r - 1.0)
        else:  # window
            w = int(self.param("window_size"))
            p = np.where(r <= w, self.param("inside_prob"),
                         self.param("outside_prob"))
        if np.any(p < 0) or np.any(p > 1):
            raise ClickLogError("exam probabilities must lie in [0, 1]")
        return p

    @staticmethod
    def rank_decay(exponent: float = 1.0) -> "ExamModel":
        return ExamModel("rank_decay", (("exponent", float(exponent)),))

    @staticmethod
    def cascade(continuation: float = 0.7) -> "ExamModel":
        return ExamModel("cascade", (("continuation", float(continuation)),))

    @staticmethod
    def window(window_size: int = 3, inside_prob: float = 0.95,
               outside_prob: float = 0.05) -> "ExamModel":
        return ExamModel("window", (("window_size", float(window_size)),
                                    ("inside_prob", float(inside_prob)),
                                    ("outside_prob", float(outside_prob))))


@dataclass
class GroundTruth:
    """Generating relevance and examination process of a simulated log."""

    relevance: dict[tuple[str, str], float]
    exam_model: ExamModel

    def __post_init__(self):
        for val in self.relevance.values():
            if not 0.0 <= val <= 1.0:
                raise ClickLogError("relevance values must lie in [0, 1]")


@dataclass
class SimConfig:
    n_queries: int
    docs_per_query: int
    impressions_per_query: int
    positions: int = 10
    exam_model: ExamModel = field(default_factory=ExamModel.window)
    relevance_prior: str = "uniform"  # uniform | constant:<v> | beta:<a>,<b>
    seed: int = 0

    def __post_init__(self):
        for name in ("n_queries", "docs_per_query", "impressions_per_query",
                     "positions"):
            if getattr(self, name) < 1:
                raise ClickLogError(f"{name} must be >= 1")
        if self.positions > MAX_POSITIONS:
            raise ClickLogError(f"positions must be <= {MAX_POSITIONS}")
        if self.docs_per_query < self.positions:
            raise ClickLogError("docs_per_query must cover all positions")

    def draw_relevance(self, rng: np.random.Generator, n: int) -> np.ndarray:
        spec = self.relevance_prior
        if spec == "uniform":
            return rng.uniform(0.0, 1.0, size=n)
        if spec.startswith("constant:"):
            v = float(spec.split(":", 1)[1])
            if not 0.0 <= v <= 1.0:
                raise ClickLogError("constant relevance outside [0, 1]")
            return np.full(n, v)
        if spec.startswith("beta:"):
            a, b = (float(x) for x in spec.split(":", 1)[1].split(","))
            return rng.beta(a, b, size=n)
        raise ClickLogError(f"unknown relevance prior {spec!r}")


# ---------------------------------------------------------------------------
# canonical format

def parse_canonical(line: str, lineno: Optional[int] = None) -> Impression:
    """Parse one canonical log line into an Impression."""
    where = "" if lineno is None else f" (line {lineno})"
    fields = line.rstrip("\n").split("\t")
    if len(fields) != 4:
        raise ClickLogError(f"expected 4 tab-separated fields, "
                            f"got {len(fields)}{where}")
    session_id, query_id, docs, clicks = fields
    doc_ids = tuple(docs.split("|"))
    if any(ch not in "01" for ch in clicks):
        raise ClickLogError(f"click string has characters outside 0/1{where}")
    if len(clicks) != len(doc_ids):
        raise ClickLogError(
            f"click string length {len(clicks)} != doc count "
            f"{len(doc_ids)}{where}")
    try:
        return Impression(session_id, query_id, doc_ids,
                          tuple(int(c) for c in clicks))
    except ClickLogError as exc:
        raise ClickLogError(f"{exc}{where}") from None


def write_canonical(imp: Impression) -> str:
    """Inverse of parse_canonical; returns the bare line (no newline)."""
    return "\t".join([imp.session_id, imp.query_id, "|".join(imp.doc_ids),
                      "".join(str(c) for c in imp.clicks)])


def read_canonical_file(lines: Iterable[str]) -> Iterator[Impression]:
    for i, line in enumerate(lines, start=1):
        if line.strip():
            yield parse_canonical(line, lineno=i)


def write_canonical_file(path, impressions: Iterable[Impression]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for imp in impressions:
            fh.write(write_canonical(imp) + "\n")


def last_click_position(imp: Impression) -> Optional[int]:
    """1-based rank of the last click, or None when nothing was clicked."""
    for rank in range(len(imp), 0, -1):
        if imp.clicks[rank - 1]:
            return rank
    return None


# ---------------------------------------------------------------------------
# interactive CSV format

def parse_interactive_row(row: dict[str, str]) -> Impression:
    """Convert one interactive-CSV row (as a dict) into an Impression.

    Clicked skus may be comma-separated; a clicked sku absent from the
    impression list raises (callers skip and count such rows).
    """
    doc_ids = tuple(s for s in row["product impression"].split("|") if s)
    if not doc_ids:
        raise ClickLogError("empty impression list")
    clicked = {s.strip() for s in row["click sku"].split(",") if s.strip()}
    missing = clicked - set(doc_ids)
    if missing:
        raise ClickLogError(
            f"click sku {sorted(missing)} not in the impression list")
    clicks = tuple(1 if d in clicked else 0 for d in doc_ids)
    return Impression(session_id=row["session id"],
                      query_id=row["searchterm"],
                      doc_ids=doc_ids, clicks=clicks)


def parse_interactive_csv(text_or_path) -> tuple[list[Impression], int]:
    """Parse a whole interactive CSV; returns (impressions, skipped rows)."""
    if isinstance(text_or_path, str) and "\n" in text_or_path:
        fh = io.StringIO(text_or_path)
        close = False
    else:
        fh = open(text_or_path, "r", encoding="utf-8", newline="")
        close = True
    try:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ClickLogError("interactive CSV has no header row")
        missing = [c for c in INTERACTIVE_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise ClickLogError(f"interactive CSV lacks columns: {missing}")
        out: list[Impression] = []
        skipped = 0
        for row in reader:
            try:
                out.append(parse_interactive_row(row))
            except ClickLogError:
                skipped += 1
        return out, skipped
    finally:
        if close:
            fh.close()


# ---------------------------------------------------------------------------
# simulator

def simulate_logs(cfg: SimConfig) -> tuple[Dataset, GroundTruth]:
    """Generate a biased click log with its ground-truth sidecar.

    Clicks at rank r are Bernoulli(exam_prob(r) * relevance(q, d)).  The
    presentation order of each query's documents is drawn once and reused
    for every impression of that query, like a static production ranker;
    this is what makes the log position-biased rather than self-averaging.
    Identical seeds give bit-identical output.
    """
    rng = np.random.default_rng(cfg.seed)
    exam = cfg.exam_model.exam_probs(cfg.positions)

    impressions: list[Impression] = []
    feature_table: dict[tuple[str, str], np.ndarray] = {}
    relevance: dict[tuple[str, str], float] = {}

    feat_root = np.random.SeedSequence([cfg.seed, 0xFEA7])
    for q in range(cfg.n_queries):
        qid = f"q{q}"
        doc_ids = [f"q{q}_d{j}" for j in range(cfg.docs_per_query)]
        rel = cfg.draw_relevance(rng, cfg.docs_per_query)
        order = rng.permutation(cfg.docs_per_query)[:cfg.positions]
        ranked = tuple(doc_ids[j] for j in order)
        ranked_rel = rel[order]
        for j, did in enumerate(doc_ids):
            relevance[(qid, did)] = float(rel[j])
            feature_table[(qid, did)] = _features.synth_doc_features(
                float(rel[j]), np.random.SeedSequence([cfg.seed, 0xFEA7, q, j]))
        u = rng.random((cfg.impressions_per_query, cfg.positions, 2))
        clicked = (u[:, :, 0] < exam[None, :]) & (u[:, :, 1] < ranked_rel[None, :])
        for i in range(cfg.impressions_per_query):
            impressions.append(Impression(
                session_id=f"s{q}_{i}", query_id=qid, doc_ids=ranked,
                clicks=tuple(int(c) for c in clicked[i])))

    return (Dataset(impressions, feature_table),
            GroundTruth(relevance, cfg.exam_model))


# ---------------------------------------------------------------------------
# ground-truth sidecar TSV

def write_ground_truth(path, gt: GroundTruth):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        params = " ".join(f"{k}={v:.17g}" for k, v in gt.exam_model.params)
        fh.write(f"#exam_model={gt.exam_model.kind} {params}\n")
        for (qid, did), rel in sorted(gt.relevance.items()):
            fh.write(f"{qid}\t{did}\t{rel:.17g}\n")


def read_ground_truth(path) -> GroundTruth:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("#exam_model="):
            raise ClickLogError("ground-truth sidecar lacks exam-model header")
        head = header[1:].split()
        kind = head[0].split("=", 1)[1]
        params = tuple((k, float(v)) for k, v in
                       (kv.split("=", 1) for kv in head[1:]))
        relevance = {}
        for i, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            qid, did, rel = line.rstrip("\n").split("\t")
            relevance[(qid, did)] = float(rel)
    return GroundTruth(relevance, ExamModel(kind, params))


# ---------------------------------------------------------------------------
# splitting

def split_dataset(ds: Dataset, ratios: tuple[float, float, float],
                  seed: int) -> tuple[Dataset, Dataset, Dataset]:
    """Partition by session id; no session straddles two splits."""
    if any(r <= 0 for r in ratios):
        raise ClickLogError("split ratios must be positive")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ClickLogError("split ratios must sum to 1")
    sessions: dict[str, list[Impression]] = {}
    for imp in ds.impressions:
        sessions.setdefault(imp.session_id, []).append(imp)
    ids = list(sessions)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ids))
    n = len(ids)
    n_train = round(ratios[0] * n)
    n_valid = round((ratios[0] + ratios[1]) * n) - n_train
    buckets = ([], [], [])
    for pos, idx in enumerate(perm):
        b = 0 if pos < n_train else (1 if pos < n_train + n_valid else 2)
        buckets[b].extend(sessions[ids[idx]])
    for name, bucket in zip(("train", "valid", "test"), buckets):
        if not bucket:
            import warnings
            warnings.warn(f"{name} split is empty (dataset too small)")
    return tuple(Dataset(b, ds.feature_table) for b in buckets)
