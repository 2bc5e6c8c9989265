"""Flat key=value experiment configuration.

Every key is declared in the registry below; unknown keys are errors so
typos fail loudly.  A sha256 digest of the parsed, normalized content is
stamped into every output artifact for provenance.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .clicklog import ExamModel, SimConfig
from .drlc import Hyper
from .nn import OptConfig


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes"):
        return True
    if s.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


def _ks(s: str) -> tuple:
    return tuple(int(p) for p in s.split(","))


def _exam_model(s: str) -> str:
    parse_exam_model(s)
    return s


def parse_exam_model(s: str) -> ExamModel:
    """e.g. "window:window_size=3,inside_prob=0.95,outside_prob=0.05"."""
    kind, _, rest = s.partition(":")
    kwargs = {}
    if rest:
        for part in rest.split(","):
            name, _, value = part.partition("=")
            if not value:
                raise ConfigError(f"bad exam model parameter {part!r}")
            kwargs[name] = float(value)
    factory = {"rank_decay": ExamModel.rank_decay,
               "cascade": ExamModel.cascade,
               "window": ExamModel.window}.get(kind)
    if factory is None:
        raise ConfigError(f"unknown exam model kind {kind!r}")
    try:
        return factory(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad exam model spec {s!r}: {exc}") from None


# key -> (parser, default); every key documented here.
REGISTRY: dict[str, tuple] = {
    # simulator
    "sim.n_queries": (int, 100),
    "sim.docs_per_query": (int, 10),
    "sim.impressions_per_query": (int, 20),
    "sim.positions": (int, 10),
    "sim.exam_model": (_exam_model,
                       "window:window_size=3,inside_prob=0.95,"
                       "outside_prob=0.05"),
    "sim.relevance_prior": (str, "uniform"),
    # splits (fractions of sessions; must sum to 1)
    "split.train": (float, 0.8),
    "split.valid": (float, 0.1),
    "split.test": (float, 0.1),
    # DRLC
    "drlc.beta": (float, 0.7),
    "drlc.theta": (float, 0.3),
    "drlc.window_size": (int, 3),
    "drlc.discount": (float, 1.0),
    "drlc.epochs": (int, 20),
    "drlc.pretrain_epochs": (int, 3),
    "drlc.epsilon": (float, 0.0),
    "drlc.c2_pretrain_inclusive": (_bool, False),
    "drlc.patience": (int, 3),
    "drlc.valid_fraction": (float, 0.1),
    "drlc.dtype": (str, "float64"),
    # optimizer
    "opt.method": (str, "sgd_momentum"),
    "opt.learning_rate": (float, 1e-3),
    "opt.momentum": (float, 0.9),
    "opt.batch_size": (int, 64),
    "opt.weight_decay": (float, 0.0),
    # PGM baselines
    "pgm.iters": (int, 50),
    "pgm.persevere": (float, 0.9),
    # evaluation
    "eval.ks": (_ks, (1, 3, 5, 10)),
    # global seed
    "seed": (int, 0),
}


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        for key in self.values:
            if key not in REGISTRY:
                raise ConfigError(f"unknown config key {key!r}")

    def __getitem__(self, key: str):
        if key not in REGISTRY:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values.get(key, REGISTRY[key][1])

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or not key:
                raise ConfigError(f"line {lineno}: expected key=value")
            if key not in REGISTRY:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            parser = REGISTRY[key][0]
            try:
                values[key] = parser(value)
            except (ValueError, ConfigError) as exc:
                raise ConfigError(
                    f"line {lineno}: bad value for {key}: {exc}") from None
        return cls(values)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.parse(fh.read())

    def canonical(self) -> str:
        """Normalized rendering covering every key (defaults included)."""
        lines = [f"{key}={self[key]!r}" for key in sorted(REGISTRY)]
        return "\n".join(lines) + "\n"

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    # -- typed views ----------------------------------------------------

    def sim_config(self) -> SimConfig:
        return SimConfig(
            n_queries=self["sim.n_queries"],
            docs_per_query=self["sim.docs_per_query"],
            impressions_per_query=self["sim.impressions_per_query"],
            positions=self["sim.positions"],
            exam_model=parse_exam_model(self["sim.exam_model"]),
            relevance_prior=self["sim.relevance_prior"],
            seed=self["seed"])

    def opt_config(self) -> OptConfig:
        return OptConfig(
            method=self["opt.method"],
            learning_rate=self["opt.learning_rate"],
            momentum=self["opt.momentum"],
            batch_size=self["opt.batch_size"],
            weight_decay=self["opt.weight_decay"])

    def hyper(self) -> Hyper:
        return Hyper(
            beta=self["drlc.beta"],
            theta=self["drlc.theta"],
            window_size=self["drlc.window_size"],
            discount=self["drlc.discount"],
            epochs=self["drlc.epochs"],
            pretrain_epochs=self["drlc.pretrain_epochs"],
            opt=self.opt_config(),
            seed=self["seed"],
            epsilon=self["drlc.epsilon"],
            c2_pretrain_inclusive=self["drlc.c2_pretrain_inclusive"],
            patience=self["drlc.patience"],
            valid_fraction=self["drlc.valid_fraction"],
            dtype=self["drlc.dtype"])

    def split_ratios(self) -> tuple[float, float, float]:
        return (self["split.train"], self["split.valid"], self["split.test"])
