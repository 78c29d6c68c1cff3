import numpy as np

# smallest and largest float32 values strictly inside (0, 1)
_GATE_FLOOR = np.float32(np.finfo(np.float32).tiny)
_GATE_CEILING = np.nextafter(np.float32(1.0), np.float32(0.0))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, np.float32(0.0))


def logistic(x: np.ndarray) -> np.ndarray:
    """Overflow-free sigmoid, clamped so every gate lies strictly inside (0, 1)."""
    x = np.asarray(x, dtype=np.float32)
    decay = np.exp(-np.abs(x))
    positive_side = np.float32(1.0) / (np.float32(1.0) + decay)
    gate = np.where(x >= 0, positive_side, decay * positive_side)
    return np.clip(gate, _GATE_FLOOR, _GATE_CEILING).astype(np.float32, copy=False)


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(np.float32(0.0), np.asarray(x, dtype=np.float32))
