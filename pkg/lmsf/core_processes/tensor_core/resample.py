from enum import Enum

import numpy as np

from lmsf.core_processes.tensor_core.conv2d import conv2d
from lmsf.core_processes.tensor_core.feature_map_contract import ensure_feature_map
from lmsf.core_processes.tensor_core.layer_models import ConvLayer
from lmsf.core_processes.tensor_core.mac_profiler import is_symbolic

BINOMIAL_BLUR_KERNEL = (np.outer([1.0, 2.0, 1.0], [1.0, 2.0, 1.0]) / 16.0).astype(np.float32)


class ResampleMode(str, Enum):
    NEAREST_UP_2 = "nearestUp2"
    MEAN_DOWN_2 = "meanDown2"
    BLUR_THEN_DOWN_2 = "blurThenDown2"
    GLOBAL_AVG_POOL = "globalAvgPool"


def nearest_up_2(x: np.ndarray) -> np.ndarray:
    x = ensure_feature_map(x)
    return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)


def _pad_to_even(x: np.ndarray) -> np.ndarray:
    pad_rows = x.shape[2] % 2
    pad_cols = x.shape[3] % 2
    if pad_rows == 0 and pad_cols == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (0, pad_rows), (0, pad_cols)), mode="edge")


def mean_down_2(x: np.ndarray) -> np.ndarray:
    """Average disjoint 2x2 blocks. An odd height or width first replicates its last row / column."""
    x = _pad_to_even(ensure_feature_map(x))
    # pairwise order keeps the average of four equal values exact
    top = x[:, :, 0::2, 0::2] + x[:, :, 0::2, 1::2]
    bottom = x[:, :, 1::2, 0::2] + x[:, :, 1::2, 1::2]
    return (top + bottom) * np.float32(0.25)


def binomial_blur_layer(channels: int) -> ConvLayer:
    weight = np.broadcast_to(BINOMIAL_BLUR_KERNEL, (channels, 1, 3, 3)).copy()
    return ConvLayer(weight=weight, groups=channels)


def blur_then_down_2(x: np.ndarray) -> np.ndarray:
    x = ensure_feature_map(x)
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)), mode="edge")
    blurred = conv2d(padded, binomial_blur_layer(x.shape[1]))
    return mean_down_2(blurred)


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    x = ensure_feature_map(x)
    if is_symbolic():
        return np.zeros((x.shape[0], x.shape[1], 1, 1), dtype=np.float32)
    return x.mean(axis=(2, 3), keepdims=True, dtype=np.float32)


_RESAMPLERS = {
    ResampleMode.NEAREST_UP_2: nearest_up_2,
    ResampleMode.MEAN_DOWN_2: mean_down_2,
    ResampleMode.BLUR_THEN_DOWN_2: blur_then_down_2,
    ResampleMode.GLOBAL_AVG_POOL: global_avg_pool,
}


def resample(x: np.ndarray, mode: ResampleMode) -> np.ndarray:
    return _RESAMPLERS[ResampleMode(mode)](x)
