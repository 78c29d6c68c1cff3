import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from lmsf.core_processes.tensor_core.activation_probe import probe_activation
from lmsf.core_processes.tensor_core.activations import logistic, relu
from lmsf.core_processes.tensor_core.conv2d import conv2d
from lmsf.core_processes.tensor_core.feature_map_contract import ensure_channels
from lmsf.core_processes.tensor_core.layer_models import ConvLayer, LinearLayer
from lmsf.core_processes.tensor_core.linear import linear
from lmsf.core_processes.tensor_core.resample import global_avg_pool, nearest_up_2
from lmsf.utilities.lmsf_exceptions import ContractViolationException

logger = logging.getLogger(__name__)

TFE_CHANNEL_GATE_PROBE = "tfe.channel_gate"
TFE_SPATIAL_GATE_PROBE = "tfe.spatial_gate"


class TfeParams(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    prior_conv: ConvLayer
    channel_squeeze: LinearLayer
    channel_excite: LinearLayer
    dw3: ConvLayer
    dw5: ConvLayer
    # only read by the gradient-consistency loss
    edge_projection: ConvLayer

    @model_validator(mode="after")
    def check_dimensions(self):
        channels = self.channels
        if self.prior_conv.in_channels != 2 * channels:
            raise ValueError(f"prior conv must read 2 x {channels} channels, got weight {self.prior_conv.weight.shape}")
        if self.channel_squeeze.in_features != channels or self.channel_excite.out_features != channels:
            raise ValueError(
                f"channel gate {self.channel_squeeze.weight.shape} -> {self.channel_excite.weight.shape} "
                f"must map {channels} channels back to {channels}"
            )
        for name, conv in (("dw3", self.dw3), ("dw5", self.dw5)):
            if not conv.is_depthwise or conv.out_channels != channels:
                raise ValueError(f"{name} must be depthwise over {channels} channels, got weight {conv.weight.shape}")
        if self.edge_projection.out_channels != 1:
            raise ValueError(f"edge projection must emit one plane, got weight {self.edge_projection.weight.shape}")
        return self

    @property
    def channels(self) -> int:
        return self.prior_conv.out_channels


def tfe_forward(f3_hat: np.ndarray, f4_hat: np.ndarray, f5_hat: np.ndarray, params: TfeParams) -> np.ndarray:
    """
    Refine the stride-8 map with a semantic prior from the deeper scales:
      S = Conv1x1([Up(F4'), Up(Up(F5'))])
      w = logistic(W2 relu(W1 gap(S)))            per channel
      M = logistic(channel mean of DW3(S) + DW5(S)) one plane
      F3~ = (w * F3') * M + F3'
    """
    channels = params.channels
    f3_hat = ensure_channels(f3_hat, channels, "F3'")
    upsampled_4 = nearest_up_2(ensure_channels(f4_hat, channels, "F4'"))
    upsampled_5 = nearest_up_2(nearest_up_2(ensure_channels(f5_hat, channels, "F5'")))
    if upsampled_4.shape != f3_hat.shape or upsampled_5.shape != f3_hat.shape:
        raise ContractViolationException(
            f"TFE inputs must sit at strides 8/16/32, got {f3_hat.shape}, {f4_hat.shape}, {f5_hat.shape}"
        )

    prior = conv2d(np.concatenate([upsampled_4, upsampled_5], axis=1), params.prior_conv)

    n = prior.shape[0]
    descriptor = global_avg_pool(prior).reshape(n, channels)
    channel_gate = logistic(linear(relu(linear(descriptor, params.channel_squeeze)), params.channel_excite))

    local_response = conv2d(prior, params.dw3) + conv2d(prior, params.dw5)
    spatial_gate = logistic(local_response.mean(axis=1, keepdims=True, dtype=np.float32))

    probe_activation(TFE_CHANNEL_GATE_PROBE, channel_gate)
    probe_activation(TFE_SPATIAL_GATE_PROBE, spatial_gate)
    return (channel_gate[:, :, None, None] * f3_hat) * spatial_gate + f3_hat
