from typing import Any, Iterator, Optional, Set, Tuple

import numpy as np
from pydantic import BaseModel

from lmsf.core_processes.reparameterization.branch_spec import AffineNorm
from lmsf.core_processes.tensor_core.layer_models import ConvLayer, LinearLayer, NormLayer

PARAMETER_LAYER_TYPES = (ConvLayer, LinearLayer, NormLayer, AffineNorm)


def iter_parameter_layers(value: Any, _visited: Optional[Set[int]] = None) -> Iterator[BaseModel]:
    """Yield every weight-holding layer reachable from `value`, each object once."""
    visited = _visited if _visited is not None else set()
    if isinstance(value, PARAMETER_LAYER_TYPES):
        if id(value) not in visited:
            visited.add(id(value))
            yield value
        return
    if isinstance(value, BaseModel):
        for field_name in type(value).model_fields:
            yield from iter_parameter_layers(getattr(value, field_name), visited)
    elif isinstance(value, (list, tuple)):
        for item in value:
            yield from iter_parameter_layers(item, visited)


def count_parameters(value: Any) -> int:
    return sum(layer.parameter_count for layer in iter_parameter_layers(value))


def iter_named_arrays(
    value: Any, prefix: str = "", _visited: Optional[Set[int]] = None
) -> Iterator[Tuple[str, BaseModel, str, np.ndarray]]:
    """
    Yield (dotted name, owning model, field name, array) for every array field reachable from `value`.
    Objects reached twice (tied weights) are yielded only under their first name.
    """
    visited = _visited if _visited is not None else set()
    if isinstance(value, BaseModel):
        if id(value) in visited:
            return
        visited.add(id(value))
        for field_name in type(value).model_fields:
            field_value = getattr(value, field_name)
            name = f"{prefix}.{field_name}" if prefix else field_name
            if isinstance(field_value, np.ndarray):
                yield name, value, field_name, field_value
            else:
                yield from iter_named_arrays(field_value, name, visited)
    elif isinstance(value, (list, tuple)):
        for index, item in enumerate(value):
            yield from iter_named_arrays(item, f"{prefix}.{index}", visited)
