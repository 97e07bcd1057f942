"""Differentiable building blocks for the restoration network."""

from .alloc import tune_allocator
from .autodiff import Tensor, astensor, backward, grad_enabled, no_grad
from .gradcheck import check_gradients
from .ops import (
    add,
    bilinear_sample,
    clamp_min,
    concat_channels,
    conv2d,
    deform_conv2d,
    div,
    leaky_relu,
    mean_all,
    mean_pool2,
    mse_loss,
    mul,
    pow_const,
    scale,
    sigmoid,
    slice_channels,
    sub,
)

__all__ = [
    "Tensor", "astensor", "backward", "grad_enabled", "no_grad", "tune_allocator",
    "add", "sub", "mul", "div", "scale", "leaky_relu", "sigmoid",
    "pow_const", "clamp_min",
    "concat_channels", "slice_channels", "mean_pool2", "mean_all", "mse_loss",
    "conv2d", "deform_conv2d", "bilinear_sample", "check_gradients",
]
