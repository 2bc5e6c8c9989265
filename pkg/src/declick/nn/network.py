"""Value networks: the bias-aware C1 and the de-biased C2.

Both are small 1-D CNNs: C1 takes the concatenated observation vector
(100) and document vector (56) as one single-channel length-156 signal
and joins them through two conv+ReLU layers; C2 takes the document
vector alone (length 56).  Each then runs three conv blocks
(conv 16x3 / batchnorm / ReLU) and a dense head to 2 logits, whose
softmax "click" component is the click probability.
"""
from __future__ import annotations

import numpy as np

from .layers import (BatchNorm, Conv3, Dense, DivergenceError, Flatten,
                     Layer, ReLU, softmax_probs, softmax_xent_backward,
                     LOGIT_CLAMP)

N_FILTERS = 16
BIAS_LEN = 100
DOC_LEN = 56

KIND_INPUT_LEN = {"C1": BIAS_LEN + DOC_LEN, "C2": DOC_LEN}


class ValueNetwork:
    """A click-probability network; kind is "C1" (biased) or "C2" (de-biased)."""

    def __init__(self, kind: str, seed: int, dtype=np.float64,
                 input_len: int | None = None):
        if kind not in KIND_INPUT_LEN:
            raise ValueError(f"unknown network kind {kind!r}")
        self.kind = kind
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        self.input_len = int(input_len or KIND_INPUT_LEN[kind])
        self.layers: list[Layer] = []
        ss = np.random.SeedSequence([0xC11C, seed, 0 if kind == "C1" else 1])
        children = iter(ss.spawn(16))

        def rng():
            return np.random.default_rng(next(children))

        c = 1
        if kind == "C1":  # two join layers for the concatenated B and D
            for _ in range(2):
                self.layers += [Conv3(c, N_FILTERS, rng(), self.dtype), ReLU()]
                c = N_FILTERS
        for _ in range(3):  # three conv blocks
            self.layers += [Conv3(c, N_FILTERS, rng(), self.dtype, use_bias=False),
                            BatchNorm(N_FILTERS, self.dtype), ReLU()]
            c = N_FILTERS
        self.layers += [Flatten(),
                        Dense(N_FILTERS * self.input_len, 2, rng(), self.dtype)]
        self._clamp_mask = None

    # ------------------------------------------------------------------
    def named_params(self):
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params.items():
                yield f"layer{i}.{name}", arr

    def named_grads(self):
        for i, layer in enumerate(self.layers):
            for name, arr in layer.grads.items():
                yield f"layer{i}.{name}", arr

    def n_params(self) -> int:
        return sum(int(a.size) for _, a in self.named_params())

    def batchnorms(self):
        return [l for l in self.layers if isinstance(l, BatchNorm)]

    # ------------------------------------------------------------------
    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        """Click probabilities for a batch.

        x: (N, input_len) or (N, 1, input_len).  Returns (N,) probabilities
        in (0, 1).  Train mode caches activations for backward and updates
        batchnorm running statistics.
        """
        if x.ndim == 2:
            x = x[:, None, :]
        if x.shape[2] != self.input_len:
            raise ValueError(
                f"{self.kind} expects length {self.input_len}, got {x.shape[2]}")
        h = np.ascontiguousarray(x, dtype=self.dtype)
        for layer in self.layers:
            h = layer.forward(h, train)
        if not np.all(np.isfinite(h)):
            raise DivergenceError("non-finite activation in forward pass")
        self._clamp_mask = (np.abs(h) <= LOGIT_CLAMP) if train else None
        probs = softmax_probs(h)
        if train:
            self._probs = probs
        return probs[:, 1]

    def backward(self, targets: np.ndarray) -> tuple[dict[str, np.ndarray], float]:
        """Backprop the mean softmax cross-entropy of the cached forward.

        Returns (grads keyed like named_params, mean loss).
        """
        if self._clamp_mask is None:
            raise RuntimeError("backward requires a preceding train forward")
        targets = np.asarray(targets, dtype=np.intp)
        losses, glogits = softmax_xent_backward(self._probs, targets)
        g = (glogits * self._clamp_mask).astype(self.dtype)
        self._clamp_mask = None
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return dict(self.named_grads()), float(losses.mean())

    def forward_single(self, x: np.ndarray, train: bool = False) -> float:
        return float(self.forward(np.asarray(x)[None, :], train=train)[0])


def relu_margin(net: ValueNetwork, x: np.ndarray) -> float:
    """Smallest |pre-activation| entering any ReLU for this input.

    Central differences are only meaningful away from the ReLU kinks and
    the logit clamp; callers reject inputs whose margin is too small.
    Margins are measured on the train-mode surface (batch statistics),
    because that is the surface grad_check differentiates; running stats
    and layer caches are left untouched.
    """
    x = np.atleast_2d(np.asarray(x, dtype=net.dtype))
    if x.ndim == 2:
        x = x[:, None, :]
    h = x
    margin = np.inf
    saved = [(layer.running_mean.copy(), layer.running_var.copy())
             for layer in net.layers if isinstance(layer, BatchNorm)]
    for layer in net.layers:
        if isinstance(layer, ReLU):
            margin = min(margin, float(np.abs(h).min()))
        h = layer.forward(h, train=True)
        layer._cache = None
    for layer in net.layers:
        if isinstance(layer, BatchNorm):
            layer.running_mean, layer.running_var = saved.pop(0)
    margin = min(margin, float(LOGIT_CLAMP - np.abs(h).max()))
    return margin


def random_smooth_triple(seed: int, eps: float = 1e-5,
                         kind: str | None = None,
                         input_len: int | None = None):
    """Seeded (net, input, target) triple safe for finite differencing.

    Uses reduced-length nets (same layer stack, shorter signals) to keep
    the check tractable, and redraws until every ReLU pre-activation
    clears a 20 * eps margin so the loss is locally smooth around the
    evaluation point.
    """
    rng = np.random.default_rng(np.random.SeedSequence([0x6C5D, seed]))
    if kind is None:
        kind = "C1" if seed % 2 == 0 else "C2"
    if input_len is None:
        input_len = int(rng.integers(16, 33))
    margin = 5.0 * eps
    for _ in range(4000):
        net = ValueNetwork(kind, seed=int(rng.integers(2**31)),
                           input_len=input_len)
        x = rng.random(net.input_len)
        if relu_margin(net, x) > margin:
            return net, x, int(rng.integers(2))
    raise RuntimeError("could not find a smooth gradcheck point")


def grad_check(net: ValueNetwork, x: np.ndarray, target: int,
               eps: float = 1e-5) -> float:
    """Max relative error of analytic gradients vs central differences.

    Uses train-mode forwards so batch statistics (not running stats)
    define the loss surface being differentiated.
    """
    if net.n_params() > 10_000:
        raise ValueError("grad_check is for nets with <= 1e4 parameters")
    x = np.atleast_2d(np.asarray(x, dtype=net.dtype))
    targets = np.full(x.shape[0], target, dtype=np.intp)

    def loss() -> float:
        probs1 = net.forward(x, train=True)
        n = probs1.shape[0]
        p = np.where(targets == 1, probs1, 1.0 - probs1)
        # flush caches so repeated forwards stay legal
        for layer in net.layers:
            layer._cache = None
        net._clamp_mask = None
        return float(-np.log(np.maximum(p, 1e-300)).mean())

    net.forward(x, train=True)
    analytic, _ = net.backward(targets)

    worst = 0.0
    for pname, arr in net.named_params():
        ga = analytic[pname]
        flat = arr.reshape(-1)
        gflat = ga.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            lp = loss()
            flat[j] = orig - eps
            lm = loss()
            flat[j] = orig
            num = (lp - lm) / (2.0 * eps)
            denom = max(abs(gflat[j]), abs(num), 1e-8)
            worst = max(worst, abs(gflat[j] - num) / denom)
    return worst
