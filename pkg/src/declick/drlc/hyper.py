"""Hyperparameters for the de-biased RL click model."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..nn.optim import OptConfig


@dataclass
class Hyper:
    """Everything that determines a training run besides the data.

    epsilon is an ablation knob: with probability epsilon an unclicked
    position gets a random observed/unobserved label instead of the
    ratio-test one.  dtype selects the network arithmetic ("float64" or
    "float32"); float64 is the default and the reference behavior.
    """

    beta: float = 0.7
    theta: float = 0.3
    window_size: int = 3
    discount: float = 1.0
    epochs: int = 20
    pretrain_epochs: int = 3
    opt: OptConfig = field(default_factory=OptConfig)
    seed: int = 0
    epsilon: float = 0.0
    c2_pretrain_inclusive: bool = False
    patience: int = 3
    valid_fraction: float = 0.1
    dtype: str = "float64"

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")
        if self.window_size < 1:
            raise ValueError("window_size must be >= 1")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must lie in (0, 1]")
        if self.epochs < 1 or self.pretrain_epochs < 1:
            raise ValueError("epochs and pretrain_epochs must be >= 1")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if not 0.0 < self.valid_fraction < 1.0:
            raise ValueError("valid_fraction must lie in (0, 1)")
        if np.dtype(self.dtype) not in (np.dtype(np.float32),
                                        np.dtype(np.float64)):
            raise ValueError("dtype must be float32 or float64")
        if isinstance(self.opt, dict):
            self.opt = OptConfig(**self.opt)

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Hyper":
        return cls(**d)
