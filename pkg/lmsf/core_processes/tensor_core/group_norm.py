import numpy as np

from lmsf.core_processes.tensor_core.feature_map_contract import ensure_channels
from lmsf.core_processes.tensor_core.layer_models import NormLayer
from lmsf.core_processes.tensor_core.mac_profiler import is_symbolic


def group_norm(x: np.ndarray, layer: NormLayer) -> np.ndarray:
    """
    Normalize each (sample, group) slice to zero mean and unit variance, then apply the per-channel affine.

    Statistics never mix batch samples, so a batch gives the same rows as its samples processed alone.
    """
    x = ensure_channels(x, layer.channels)
    if is_symbolic():
        return np.zeros_like(x)

    n, c, h, w = x.shape
    grouped = x.reshape(n, layer.num_groups, c // layer.num_groups, h, w)
    mean = grouped.mean(axis=(2, 3, 4), keepdims=True, dtype=np.float32)
    centered = grouped - mean
    variance = np.mean(centered * centered, axis=(2, 3, 4), keepdims=True, dtype=np.float32)
    normalized = (centered / np.sqrt(variance + np.float32(layer.eps))).reshape(n, c, h, w)
    return normalized * layer.gamma[None, :, None, None] + layer.beta[None, :, None, None]
