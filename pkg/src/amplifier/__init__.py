"""Energy-amplified linear forecasting on a small numpy autodiff engine."""

from .autodiff import Parameter, Tape, Tensor, grad_check
from .baselines import (CopyForecaster, DLinearForecaster, EATWrapper,
                        LinearForecaster, build_model)
from .data import SeriesFrame, chrono_split, load_csv, standardize, windows
from .model import AmplifierConfig, AmplifierModel
from .spectral import BandPartition, amplify, dft, idft, parseval_loss_split
from .training import Adam, TrainConfig, evaluate, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "Adam", "AmplifierConfig", "AmplifierModel", "BandPartition", "CopyForecaster",
    "DLinearForecaster", "EATWrapper", "LinearForecaster", "Parameter", "SeriesFrame",
    "Tape", "Tensor", "TrainConfig", "amplify", "build_model", "chrono_split", "dft",
    "evaluate", "grad_check", "idft", "load_checkpoint", "load_csv", "parseval_loss_split",
    "save_checkpoint", "standardize", "train", "windows",
]
