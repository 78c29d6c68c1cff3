import numpy as np

from lmsf.core_processes.tensor_core.feature_map_contract import ensure_feature_map
from lmsf.core_processes.tensor_core.mac_profiler import is_symbolic


def sobel_gradient(x: np.ndarray) -> np.ndarray:
    """
    Per-channel L1 Sobel magnitude |Gx| + |Gy| with replicate padding; output has the input's shape.
    Built from central differences, then the 1-2-1 smoothing, so constant regions give exact zeros.
    """
    x = ensure_feature_map(x)
    if is_symbolic():
        return np.zeros_like(x)

    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)), mode="edge")
    difference_x = padded[:, :, :, 2:] - padded[:, :, :, :-2]
    gradient_x = difference_x[:, :, :-2, :] + 2 * difference_x[:, :, 1:-1, :] + difference_x[:, :, 2:, :]
    difference_y = padded[:, :, 2:, :] - padded[:, :, :-2, :]
    gradient_y = difference_y[:, :, :, :-2] + 2 * difference_y[:, :, :, 1:-1] + difference_y[:, :, :, 2:]
    return np.abs(gradient_x) + np.abs(gradient_y)


def grayscale(image: np.ndarray) -> np.ndarray:
    image = ensure_feature_map(image, "image")
    return image.mean(axis=1, keepdims=True, dtype=np.float32)
