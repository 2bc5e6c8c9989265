from .backend import BACKEND, HAVE_FAST, conv3_backward, conv3_forward
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .layers import DivergenceError, StaleCacheError
from .network import ValueNetwork, grad_check
from .optim import OptConfig, SgdOptimizer

__all__ = [
    "BACKEND", "HAVE_FAST", "conv3_forward", "conv3_backward",
    "CheckpointError", "load_checkpoint", "save_checkpoint",
    "DivergenceError", "StaleCacheError",
    "ValueNetwork", "grad_check",
    "OptConfig", "SgdOptimizer",
]
