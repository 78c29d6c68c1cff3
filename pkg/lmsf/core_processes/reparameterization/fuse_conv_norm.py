import numpy as np

from lmsf.core_processes.reparameterization.branch_spec import AffineNorm
from lmsf.core_processes.tensor_core.layer_models import ConvLayer
from lmsf.utilities.lmsf_exceptions import ContractViolationException


def fuse_conv_norm(conv: ConvLayer, norm: AffineNorm) -> ConvLayer:
    """
    Fold frozen normalization statistics into the preceding convolution.

    Parameters:
    - conv: the convolution whose output is normalized
    - norm: per-output-channel statistics (mean, var, gamma, beta, eps)

    Returns:
    - A convolution with the same geometry where
      W' = W * gamma / sqrt(var + eps) and b' = beta + (b - mean) * gamma / sqrt(var + eps)
    """
    if norm.eps < 0:
        raise ContractViolationException(f"norm eps must be non-negative for folding, got {norm.eps}")
    if norm.channels != conv.out_channels:
        raise ContractViolationException(
            f"norm has {norm.channels} channels but the conv weight {conv.weight.shape} has {conv.out_channels} outputs"
        )
    denominator = norm.running_var.astype(np.float64) + norm.eps
    if np.any(denominator <= 0):
        raise ContractViolationException(
            f"norm variance + eps must be positive, got minimum {float(denominator.min())} with eps={norm.eps}"
        )

    scale = norm.gamma.astype(np.float64) / np.sqrt(denominator)
    bias = conv.bias.astype(np.float64) if conv.bias is not None else np.zeros(conv.out_channels)
    fused_weight = conv.weight.astype(np.float64) * scale[:, None, None, None]
    fused_bias = norm.beta.astype(np.float64) + (bias - norm.running_mean.astype(np.float64)) * scale

    return ConvLayer(
        weight=fused_weight.astype(np.float32),
        bias=fused_bias.astype(np.float32),
        stride=conv.stride,
        padding=conv.padding,
        dilation=conv.dilation,
        groups=conv.groups,
    )
