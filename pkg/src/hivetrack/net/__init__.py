from .model import NetConfig, Network, count_params, init_network, train_step, predict_sequence
from .checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "NetConfig",
    "Network",
    "count_params",
    "init_network",
    "train_step",
    "predict_sequence",
    "save_checkpoint",
    "load_checkpoint",
]
