import numpy as np

from lmsf.core_processes.tensor_core.layer_models import LinearLayer
from lmsf.core_processes.tensor_core.mac_profiler import is_symbolic, record_macs
from lmsf.utilities.lmsf_exceptions import ContractViolationException


def linear(x: np.ndarray, layer: LinearLayer) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 2 or x.shape[1] != layer.in_features:
        raise ContractViolationException(
            f"linear input has shape {x.shape} but the layer weight {layer.weight.shape} "
            f"expects (n, {layer.in_features})"
        )
    record_macs(x.shape[0] * layer.in_features * layer.out_features)
    if is_symbolic():
        return np.zeros((x.shape[0], layer.out_features), dtype=np.float32)

    output = x @ layer.weight.T
    if layer.bias is not None:
        output += layer.bias[None, :]
    return output
