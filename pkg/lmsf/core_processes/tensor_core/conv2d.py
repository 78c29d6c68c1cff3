import logging

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from lmsf.core_processes.tensor_core.feature_map_contract import ensure_feature_map
from lmsf.core_processes.tensor_core.layer_models import ConvLayer
from lmsf.core_processes.tensor_core.mac_profiler import is_symbolic, record_macs
from lmsf.utilities.lmsf_exceptions import ContractViolationException

logger = logging.getLogger(__name__)


def conv2d_mac_count(batch_size: int, layer: ConvLayer, out_height: int, out_width: int) -> int:
    kernel_h, kernel_w = layer.kernel_size
    return (
        batch_size
        * layer.out_channels
        * (layer.in_channels // layer.groups)
        * kernel_h
        * kernel_w
        * out_height
        * out_width
    )


def conv2d(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    """
    Cross-correlate an (n, c, h, w) feature map with `layer` (zero padding), then add its bias.

    Records out * (in / groups) * kh * kw * out_h * out_w MACs per sample with the active profiler.
    """
    x = ensure_feature_map(x)
    batch_size, channels, height, width = x.shape
    if channels != layer.in_channels:
        raise ContractViolationException(
            f"conv2d input has shape {x.shape} but the layer weight {layer.weight.shape} "
            f"(groups={layer.groups}) expects {layer.in_channels} input channels"
        )
    out_height, out_width = layer.output_spatial_shape(height, width)
    if out_height < 1 or out_width < 1:
        raise ContractViolationException(
            f"conv2d input spatial size {(height, width)} is too small for kernel {layer.kernel_size} "
            f"with stride={layer.stride}, padding={layer.padding}, dilation={layer.dilation}"
        )

    record_macs(conv2d_mac_count(batch_size, layer, out_height, out_width))
    if is_symbolic():
        return np.zeros((batch_size, layer.out_channels, out_height, out_width), dtype=np.float32)

    padded = x
    if layer.padding > 0:
        pad = layer.padding
        padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))

    kernel_h, kernel_w = layer.kernel_size
    if layer.groups == 1 and kernel_h == 1 and kernel_w == 1:
        output = _pointwise(padded, layer, out_height, out_width)
    elif layer.is_depthwise:
        output = _depthwise(padded, layer, out_height, out_width)
    else:
        output = _grouped(padded, layer, out_height, out_width)

    if layer.bias is not None:
        output += layer.bias[None, :, None, None]
    return output


def _pointwise(padded: np.ndarray, layer: ConvLayer, out_height: int, out_width: int) -> np.ndarray:
    stride = layer.stride
    sampled = padded[:, :, : stride * (out_height - 1) + 1 : stride, : stride * (out_width - 1) + 1 : stride]
    output = np.tensordot(layer.weight[:, :, 0, 0], sampled, axes=([1], [1]))  # (out, n, h, w)
    return np.ascontiguousarray(output.transpose(1, 0, 2, 3))


def _depthwise(padded: np.ndarray, layer: ConvLayer, out_height: int, out_width: int) -> np.ndarray:
    stride, dilation = layer.stride, layer.dilation
    kernel_h, kernel_w = layer.kernel_size
    batch_size, channels = padded.shape[:2]
    output = np.zeros((batch_size, channels, out_height, out_width), dtype=np.float32)
    for tap_row in range(kernel_h):
        row_start = tap_row * dilation
        row_stop = row_start + stride * (out_height - 1) + 1
        for tap_col in range(kernel_w):
            col_start = tap_col * dilation
            col_stop = col_start + stride * (out_width - 1) + 1
            tap_weight = layer.weight[:, 0, tap_row, tap_col][None, :, None, None]
            output += tap_weight * padded[:, :, row_start:row_stop:stride, col_start:col_stop:stride]
    return output


def _grouped(padded: np.ndarray, layer: ConvLayer, out_height: int, out_width: int) -> np.ndarray:
    stride, dilation, groups = layer.stride, layer.dilation, layer.groups
    kernel_h, kernel_w = layer.kernel_size
    effective_h = dilation * (kernel_h - 1) + 1
    effective_w = dilation * (kernel_w - 1) + 1

    windows = sliding_window_view(padded, (effective_h, effective_w), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride, ::dilation, ::dilation][:, :, :out_height, :out_width]

    in_per_group = layer.in_channels // groups
    out_per_group = layer.out_channels // groups
    group_outputs = []
    for group_index in range(groups):
        group_windows = windows[:, group_index * in_per_group : (group_index + 1) * in_per_group]
        group_weight = layer.weight[group_index * out_per_group : (group_index + 1) * out_per_group]
        # (n, out_h, out_w, out_per_group)
        group_output = np.tensordot(group_windows, group_weight, axes=([1, 4, 5], [1, 2, 3]))
        group_outputs.append(group_output.transpose(0, 3, 1, 2))
    return np.ascontiguousarray(np.concatenate(group_outputs, axis=1), dtype=np.float32)
