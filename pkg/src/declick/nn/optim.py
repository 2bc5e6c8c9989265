"""First-order optimizer for the value networks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class OptConfig:
    method: str = "sgd_momentum"  # sgd | sgd_momentum
    learning_rate: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 64
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.method not in ("sgd", "sgd_momentum"):
            raise ValueError(f"unknown optimizer {self.method!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")


class SgdOptimizer:
    """Plain SGD or SGD with momentum, optional weight decay.

    sgd:           w <- w - lr * (g + wd * w)
    sgd_momentum:  v <- mu * v + (g + wd * w);  w <- w - lr * v
    """

    def __init__(self, cfg: OptConfig):
        self.cfg = cfg
        self._velocity: dict[str, np.ndarray] = {}

    def step(self, net, grads: dict[str, np.ndarray]):
        lr = self.cfg.learning_rate
        wd = self.cfg.weight_decay
        for name, param in net.named_params():
            g = grads[name]
            if wd:
                g = g + wd * param
            if self.cfg.method == "sgd_momentum":
                v = self._velocity.get(name)
                if v is None:
                    v = np.zeros_like(param)
                v = self.cfg.momentum * v + g
                self._velocity[name] = v
                param -= lr * v
            else:
                param -= lr * g
