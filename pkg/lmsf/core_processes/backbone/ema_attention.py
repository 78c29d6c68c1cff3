import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from lmsf.core_processes.tensor_core.activation_probe import probe_activation
from lmsf.core_processes.tensor_core.activations import logistic, relu
from lmsf.core_processes.tensor_core.conv2d import conv2d
from lmsf.core_processes.tensor_core.feature_map_contract import ensure_channels
from lmsf.core_processes.tensor_core.layer_models import ConvLayer, LinearLayer
from lmsf.core_processes.tensor_core.linear import linear
from lmsf.core_processes.tensor_core.resample import global_avg_pool

logger = logging.getLogger(__name__)

EMA_CHANNEL_GATE_PROBE = "ema.channel_gate"
EMA_SPATIAL_GATE_PROBE = "ema.spatial_gate"


class EmaParams(BaseModel):
    """
    Efficient multi-scale attention: a bottleneck channel gate over pooled descriptors
    and a depthwise spatial gate reduced to a single plane.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    squeeze: LinearLayer
    excite: LinearLayer
    spatial: ConvLayer

    @model_validator(mode="after")
    def check_dimensions(self):
        channels = self.channels
        if self.squeeze.in_features != channels or self.excite.in_features != self.squeeze.out_features:
            raise ValueError(
                f"EMA bottleneck {self.squeeze.weight.shape} -> {self.excite.weight.shape} "
                f"does not chain back to {channels} channels"
            )
        if not self.spatial.is_depthwise or self.spatial.in_channels != channels:
            raise ValueError(f"EMA spatial conv must be depthwise over {channels} channels, got {self.spatial.weight.shape}")
        if self.spatial.kernel_size[0] % 2 == 0:
            raise ValueError(f"EMA spatial kernel must be odd, got {self.spatial.kernel_size}")
        return self

    @property
    def channels(self) -> int:
        return self.excite.out_features

    @property
    def parameter_count(self) -> int:
        return self.squeeze.parameter_count + self.excite.parameter_count + self.spatial.parameter_count


def ema_forward(y: np.ndarray, params: EmaParams) -> np.ndarray:
    """
    Reweight y by a per-channel gate a = logistic(W2 relu(W1 gap(y))) and a spatial gate
    S = logistic(channel mean of the depthwise response). Both gates lie in (0, 1), so the
    output never exceeds the input in magnitude.
    """
    y = ensure_channels(y, params.channels, "EMA input")
    n, c = y.shape[:2]

    descriptor = global_avg_pool(y).reshape(n, c)
    channel_gate = logistic(linear(relu(linear(descriptor, params.squeeze)), params.excite))

    spatial_response = conv2d(y, params.spatial)
    spatial_gate = logistic(spatial_response.mean(axis=1, keepdims=True, dtype=np.float32))

    probe_activation(EMA_CHANNEL_GATE_PROBE, channel_gate)
    probe_activation(EMA_SPATIAL_GATE_PROBE, spatial_gate)
    return channel_gate[:, :, None, None] * spatial_gate * y
