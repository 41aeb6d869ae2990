from .backend import ActivationBackend, Backend, CNNBackend, PredictionsBackend, predictions_backend, write_predictions
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, grad_check, grad_check_report
from .network import (
    Conv2D, Dense, Dropout, Flatten, ForwardResult, MaxPool, ModelSpec, ReLU, Softmax,
    backward, forward, init_params, reference_spec, softmax,
)
from .training import AdamState, EarlyStopping, EpochRecord, TrainConfig, TrainResult, adam_step, loss_ce, train
