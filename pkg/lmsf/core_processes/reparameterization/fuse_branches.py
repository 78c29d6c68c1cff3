import logging

import numpy as np

from lmsf.core_processes.reparameterization.branch_spec import BranchSpec, ConvBranch
from lmsf.core_processes.reparameterization.fuse_conv_norm import fuse_conv_norm
from lmsf.core_processes.tensor_core.layer_models import ConvLayer

logger = logging.getLogger(__name__)

# the deploy-form result of a branch spec is an ordinary convolution with bias
FusedConv = ConvLayer


def identity_kernel(channels: int, groups: int, kernel_size: int) -> np.ndarray:
    """Centred Kronecker delta: output channel o copies input channel o."""
    in_per_group = channels // groups
    weight = np.zeros((channels, in_per_group, kernel_size, kernel_size), dtype=np.float32)
    centre = kernel_size // 2
    for out_channel in range(channels):
        weight[out_channel, out_channel % in_per_group, centre, centre] = 1.0
    return weight


def pad_kernel_to(weight: np.ndarray, kernel_size: int) -> np.ndarray:
    pad = (kernel_size - weight.shape[2]) // 2
    if pad == 0:
        return weight
    return np.pad(weight, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def branch_as_conv(branch: ConvBranch, channels: int, groups: int) -> ConvLayer:
    if branch.is_identity:
        conv = ConvLayer(
            weight=identity_kernel(channels, groups, 1),
            bias=np.zeros(channels, dtype=np.float32),
            groups=groups,
        )
    else:
        conv = branch.conv
    if branch.norm is not None:
        return fuse_conv_norm(conv, branch.norm)
    if conv.bias is None:
        return conv.model_copy(update={"bias": np.zeros(conv.out_channels, dtype=np.float32)})
    return conv


def fuse_branches(spec: BranchSpec) -> FusedConv:
    """
    Collapse parallel branches into one convolution whose output equals the branch sum.

    Each branch is folded with its norm, smaller kernels are zero-padded into the centre of the
    largest one, and the identity becomes a delta kernel. Weights and biases are then summed.
    """
    spec.check_compatibility()
    kernel_size = spec.kernel_size
    groups = spec.groups
    stride = spec.stride

    fused_weight = None
    fused_bias = None
    for branch in spec.branches:
        conv = branch_as_conv(branch, spec.out_channels, groups)
        weight = pad_kernel_to(conv.weight.astype(np.float64), kernel_size)
        bias = conv.bias.astype(np.float64)
        fused_weight = weight if fused_weight is None else fused_weight + weight
        fused_bias = bias if fused_bias is None else fused_bias + bias

    return ConvLayer(
        weight=fused_weight.astype(np.float32),
        bias=fused_bias.astype(np.float32),
        stride=stride,
        padding=kernel_size // 2,
        groups=groups,
    )
