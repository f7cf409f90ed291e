"""Trainable sequence models over event vectors: autodiff core, LSTM,
Transformer encoder, LM/MLM objectives, training loop, checkpoints."""

from .autograd import Tensor  # noqa: F401
