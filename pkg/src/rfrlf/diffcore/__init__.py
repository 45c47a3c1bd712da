"""Differentiable numeric core: tape, primitives, optimizers, schedules."""

from . import kernels
from .optim import (OptimState, clip_global_norm, init_optim, lr_schedule,
                    optimizer_step)
from .params import (GradCheckReport, ParamEntry, ParamSet, evaluate,
                     finite_diff_check, tensor_view, value_and_grad)
from .tensor import (Tensor, add, concat, conv2d, deconv2d, dense, matvec,
                     mean_all, mul, narrow, normalize, relu, reshape, scale,
                     sigmoid, softmax, square, stop_gradient,
                     straight_through, sub, sum_all)

__all__ = [
    "GradCheckReport", "OptimState", "ParamEntry", "ParamSet", "Tensor",
    "add", "clip_global_norm", "concat", "conv2d", "deconv2d", "dense",
    "evaluate", "finite_diff_check", "init_optim", "kernels", "lr_schedule",
    "matvec", "mean_all", "mul", "narrow", "normalize", "optimizer_step",
    "relu", "reshape", "scale", "sigmoid", "softmax", "square",
    "stop_gradient", "straight_through", "sub", "sum_all", "tensor_view",
    "value_and_grad",
]
