"""
Deliberately naive loop implementations used to cross-check the vectorized primitives.
Only meant for tiny shapes.
"""
from collections import deque
from typing import List, Optional, Tuple

import numpy as np


def naive_conv2d(
    x: np.ndarray,
    weight: np.ndarray,
    bias: Optional[np.ndarray] = None,
    stride: int = 1,
    padding: int = 0,
    dilation: int = 1,
    groups: int = 1,
) -> Tuple[np.ndarray, int]:
    """Returns the zero-padded cross-correlation and the number of multiplies it performed."""
    n, in_channels, height, width = x.shape
    out_channels, in_per_group, kernel_h, kernel_w = weight.shape
    out_per_group = out_channels // groups
    out_h = (height + 2 * padding - dilation * (kernel_h - 1) - 1) // stride + 1
    out_w = (width + 2 * padding - dilation * (kernel_w - 1) - 1) // stride + 1

    output = np.zeros((n, out_channels, out_h, out_w), dtype=np.float64)
    multiplies = 0
    for sample in range(n):
        for out_channel in range(out_channels):
            group = out_channel // out_per_group
            for out_row in range(out_h):
                for out_col in range(out_w):
                    total = 0.0
                    for group_channel in range(in_per_group):
                        in_channel = group * in_per_group + group_channel
                        for tap_row in range(kernel_h):
                            for tap_col in range(kernel_w):
                                row = out_row * stride - padding + tap_row * dilation
                                col = out_col * stride - padding + tap_col * dilation
                                multiplies += 1
                                if 0 <= row < height and 0 <= col < width:
                                    total += float(x[sample, in_channel, row, col]) * float(
                                        weight[out_channel, group_channel, tap_row, tap_col]
                                    )
                    if bias is not None:
                        total += float(bias[out_channel])
                    output[sample, out_channel, out_row, out_col] = total
    return output, multiplies


def naive_group_norm(
    x: np.ndarray, num_groups: int, gamma: np.ndarray, beta: np.ndarray, eps: float
) -> np.ndarray:
    n, channels, height, width = x.shape
    channels_per_group = channels // num_groups
    output = np.zeros(x.shape, dtype=np.float64)
    for sample in range(n):
        for group in range(num_groups):
            values = []
            for channel in range(group * channels_per_group, (group + 1) * channels_per_group):
                for row in range(height):
                    for col in range(width):
                        values.append(float(x[sample, channel, row, col]))
            mean = sum(values) / len(values)
            variance = sum((value - mean) ** 2 for value in values) / len(values)
            for channel in range(group * channels_per_group, (group + 1) * channels_per_group):
                for row in range(height):
                    for col in range(width):
                        normalized = (float(x[sample, channel, row, col]) - mean) / (variance + eps) ** 0.5
                        output[sample, channel, row, col] = normalized * float(gamma[channel]) + float(beta[channel])
    return output


SOBEL_TAPS_X = ((-1, 0, 1), (-2, 0, 2), (-1, 0, 1))
SOBEL_TAPS_Y = ((-1, -2, -1), (0, 0, 0), (1, 2, 1))


def naive_sobel(x: np.ndarray) -> np.ndarray:
    n, channels, height, width = x.shape
    output = np.zeros(x.shape, dtype=np.float64)
    for sample in range(n):
        for channel in range(channels):
            for row in range(height):
                for col in range(width):
                    gradient_x = 0.0
                    gradient_y = 0.0
                    for tap_row in range(3):
                        for tap_col in range(3):
                            source_row = min(max(row + tap_row - 1, 0), height - 1)
                            source_col = min(max(col + tap_col - 1, 0), width - 1)
                            value = float(x[sample, channel, source_row, source_col])
                            gradient_x += SOBEL_TAPS_X[tap_row][tap_col] * value
                            gradient_y += SOBEL_TAPS_Y[tap_row][tap_col] * value
                    output[sample, channel, row, col] = abs(gradient_x) + abs(gradient_y)
    return output


def flood_fill_components(label_map: np.ndarray, min_area: int) -> List[Tuple[int, int]]:
    """(class id, area) of every 4-connected non-background component with area >= min_area."""
    height, width = label_map.shape
    visited = np.zeros(label_map.shape, dtype=bool)
    components = []
    for start_row in range(height):
        for start_col in range(width):
            class_id = int(label_map[start_row, start_col])
            if class_id == 0 or visited[start_row, start_col]:
                continue
            area = 0
            queue = deque([(start_row, start_col)])
            visited[start_row, start_col] = True
            while queue:
                row, col = queue.popleft()
                area += 1
                for next_row, next_col in ((row - 1, col), (row + 1, col), (row, col - 1), (row, col + 1)):
                    if (
                        0 <= next_row < height
                        and 0 <= next_col < width
                        and not visited[next_row, next_col]
                        and label_map[next_row, next_col] == class_id
                    ):
                        visited[next_row, next_col] = True
                        queue.append((next_row, next_col))
            if area >= min_area:
                components.append((class_id, area))
    return components
