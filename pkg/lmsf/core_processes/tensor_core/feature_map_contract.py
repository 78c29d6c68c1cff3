import numpy as np

from lmsf.utilities.lmsf_exceptions import ContractViolationException


def ensure_feature_map(x: np.ndarray, name: str = "x") -> np.ndarray:
    """Return `x` as a float32 (n, c, h, w) array, raising if the layout is not rank-4 with positive dims."""
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 4:
        raise ContractViolationException(f"{name} must be a rank-4 (n, c, h, w) tensor, got shape {x.shape}")
    if min(x.shape) < 1:
        raise ContractViolationException(f"{name} must have all dimensions >= 1, got shape {x.shape}")
    return x


def ensure_channels(x: np.ndarray, expected_channels: int, name: str = "x") -> np.ndarray:
    x = ensure_feature_map(x, name)
    if x.shape[1] != expected_channels:
        raise ContractViolationException(
            f"{name} must have {expected_channels} channels, got shape {x.shape}"
        )
    return x
