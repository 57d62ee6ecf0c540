"""Trajectory representation: time expansion plus a stack of convolutions.

The time axis plays the role of the channel axis, so a convolution with a
(T_pred, T_obs, 3, 3) kernel mixes the feature columns of each agent's
row on the (agent, feature) plane and remaps T_obs observed frames onto
T_pred predicted frames. Agent rows never mix here: cross-agent coupling
belongs to the graph convolution, and keeping the rows independent means
a prediction cannot depend on the arbitrary order agents are stored in.
The stacked layers that follow keep the frame count fixed and each
returns its activation, because the attention head consumes every
intermediate output, not just the deepest one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError

# Zeroing the kernel rows that would read the agents above and below
# makes the 3x3 convolution act on each agent row alone; the masked taps
# receive zero gradient and stay at their initial values.
_OWN_ROW = np.zeros((3, 3))
_OWN_ROW[1, :] = 1.0


@dataclass
class StackConfig:
    """Stacked-convolution settings. Kernels are 3x3 with padding 1 and no
    bias; each layer has one learnable prelu slope."""

    layers: int = 5
    prelu_init: float = 0.25

    def validate(self) -> None:
        if self.layers < 1:
            raise ConfigError("stack needs at least one layer")


def _conv_over_batch(x: T.Tensor, kernel: T.Tensor) -> T.Tensor:
    """Apply the row-local conv2d to a whole (N, C, H, W) batch at once."""
    if x.ndim != 4:
        raise DimensionError(f"expected a (N, T, P, D) tensor, got {x.shape}")
    return T.conv2d(x, T.mul(kernel, _OWN_ROW))


def time_expand(features: T.Tensor, kernel: T.Tensor) -> T.Tensor:
    """Map (N, T_obs, P, D) features to (N, T_pred, P, D)."""
    features = T.as_tensor(features)
    kernel = T.as_tensor(kernel)
    if kernel.ndim != 4 or kernel.shape[1] != features.shape[1]:
        raise DimensionError(
            f"time_expand kernel {kernel.shape} does not match features {features.shape}"
        )
    return _conv_over_batch(features, kernel)


def stack_forward(x0: T.Tensor, kernels: list[T.Tensor], slopes: list[T.Tensor]) -> list[T.Tensor]:
    """Run the stacked layers and return every intermediate output.

    M[0] = prelu(conv(x0)); deeper layers are residual:
    M[l] = prelu(conv(M[l-1])) + M[l-1]. The activation sits before the
    add. All outputs share x0's shape.
    """
    if not kernels or len(kernels) != len(slopes):
        raise ConfigError(f"need one kernel and one slope per layer, got {len(kernels)} and {len(slopes)}")
    outputs: list[T.Tensor] = []
    current = T.as_tensor(x0)
    for idx, (kernel, slope) in enumerate(zip(kernels, slopes)):
        convolved = T.prelu(_conv_over_batch(current, kernel), slope)
        current = convolved if idx == 0 else T.add(convolved, current)
        outputs.append(current)
    return outputs
