"""De-biased RL click model: episode mechanics, training, and the model
bundle."""
from .episode import (EpisodeResult, EpisodeState, final_state_bias,
                      label_position, reward, run_episode, sequential_bias,
                      window_start_at)
from .hyper import Hyper
from .model import DrlcModel, drlc_predict
from .training import (CompiledEpisodes, TrainingError, c2_pretrain_positions,
                       compile_episodes, pretrain, replay_c1_probs,
                       run_episodes_batch, split_valid, train, validation_ll)

__all__ = [
    "EpisodeResult", "EpisodeState", "final_state_bias", "label_position",
    "reward", "run_episode", "sequential_bias", "window_start_at",
    "Hyper", "DrlcModel", "drlc_predict",
    "CompiledEpisodes", "TrainingError", "c2_pretrain_positions",
    "compile_episodes", "pretrain", "replay_c1_probs",
    "run_episodes_batch", "split_valid", "train", "validation_ll",
]
