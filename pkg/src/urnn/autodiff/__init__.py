from urnn.autodiff.tensor import (Tensor, Graph, as_tensor, backward, gradients, no_grad,
                                  set_default_dtype, get_default_dtype, add, sub, mul, scale, neg,
                                  matmul, tanh, sigmoid, relu, exp, log, square, elementwise,
                                  concat, slice_last, reshape, tensor_sum, mean, zeros,
                                  parameters_size)
from urnn.autodiff.optim import Adam, OptimizerState, adam_step, clip_grad_norm
