"""From-scratch 1D CNN: layers, model, training, checkpoints and gradient checks."""

from .checkpoint import load_model, save_model
from .layers import conv1d_forward
from .model import (
    Model,
    NetworkConfig,
    block_forward,
    bn_statistics,
    desk_preset,
    forward,
    full_preset,
    init_model,
    length_trace,
    loss_and_grad,
    lr_schedule,
    predict,
    set_bn_statistics,
    tiny_preset,
    train,
)
