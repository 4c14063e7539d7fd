from .core import (
    CellState,
    Head,
    NetworkParameters,
    backward_batch,
    forward_batch,
    init_params,
    lstm_cell_forward,
    mape_loss,
    network_forward,
    zero_state,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .estimators import CurveDenoiser, SpectrumRegressor
from .training import TrainingConfig, evaluate_mape, fine_tune, one_cycle_lr, train_network

__all__ = [
    "CellState",
    "CurveDenoiser",
    "Head",
    "NetworkParameters",
    "SpectrumRegressor",
    "TrainingConfig",
    "backward_batch",
    "evaluate_mape",
    "fine_tune",
    "forward_batch",
    "init_params",
    "load_checkpoint",
    "lstm_cell_forward",
    "mape_loss",
    "network_forward",
    "one_cycle_lr",
    "save_checkpoint",
    "train_network",
    "zero_state",
]
