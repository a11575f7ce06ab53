"""Minimal deep-learning engine: layer specs, network, losses, Adam."""

from .specs import (  # noqa: F401
    BatchNorm,
    Conv1D,
    Dense,
    Dropout,
    Flatten,
    LSTM,
    MaxPool1D,
    NetworkSpec,
    output_shapes,
    parameter_count,
)
from .network import Network  # noqa: F401
from .losses import bce_loss, mse_loss, msle_loss, per_row_msle, per_sample_msle  # noqa: F401
from .optim import Adam  # noqa: F401
from .gradcheck import grad_check  # noqa: F401
