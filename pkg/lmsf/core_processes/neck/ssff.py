import logging
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from lmsf.core_processes.tensor_core.activation_probe import probe_activation
from lmsf.core_processes.tensor_core.activations import logistic, relu
from lmsf.core_processes.tensor_core.conv2d import conv2d
from lmsf.core_processes.tensor_core.feature_map_contract import ensure_channels
from lmsf.core_processes.tensor_core.layer_models import ConvLayer, LinearLayer
from lmsf.core_processes.tensor_core.linear import linear
from lmsf.core_processes.tensor_core.resample import blur_then_down_2, global_avg_pool, mean_down_2, nearest_up_2
from lmsf.core_processes.tensor_core.sobel_gradient import sobel_gradient
from lmsf.utilities.lmsf_exceptions import ContractViolationException

logger = logging.getLogger(__name__)

SSFF_ALPHA_PROBE = "ssff.alpha"
SSFF_DIRECTION_GATE_PROBE = "ssff.direction_gates"
SSFF_EDGE_GATE_PROBE = "ssff.edge_gate"
DIRECTION_GATE_COUNT = 4


class SsffGates(BaseModel):
    """
    Mixer outputs: per-channel weights alpha (n, 3, C_f) and the scalar direction gates
    g3_up, g4_up, g4_down, g5_down, each (n,).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    alphas: np.ndarray
    g3_up: np.ndarray
    g4_up: np.ndarray
    g4_down: np.ndarray
    g5_down: np.ndarray


class SsffParams(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    smp_projection: ConvLayer
    mixer_hidden: LinearLayer
    mixer_output: LinearLayer
    self_convs: List[ConvLayer]
    # [F4 -> F3, F5 -> F4]
    top_down_convs: List[ConvLayer]
    # [F3 -> F4, F4 -> F5]
    bottom_up_convs: List[ConvLayer]
    edge_gate: Optional[ConvLayer] = None
    blur_before_down: bool = True

    @model_validator(mode="after")
    def check_dimensions(self):
        channels = self.channels
        if len(self.self_convs) != 3 or len(self.top_down_convs) != 2 or len(self.bottom_up_convs) != 2:
            raise ValueError("SSFF needs 3 per-scale convs, 2 top-down convs and 2 bottom-up convs")
        token_dim = 2 * channels
        if self.mixer_hidden.in_features != 3 * token_dim:
            raise ValueError(
                f"mixer input must be 3 tokens of dimension {token_dim}, got weight {self.mixer_hidden.weight.shape}"
            )
        if self.mixer_output.out_features != 3 * channels + DIRECTION_GATE_COUNT:
            raise ValueError(
                f"mixer must emit {3 * channels + DIRECTION_GATE_COUNT} values, got weight {self.mixer_output.weight.shape}"
            )
        if self.edge_gate is not None and self.edge_gate.out_channels != 1:
            raise ValueError(f"edge gate must emit one plane, got weight {self.edge_gate.weight.shape}")
        return self

    @property
    def channels(self) -> int:
        return self.smp_projection.out_channels

    @property
    def token_dim(self) -> int:
        return 2 * self.channels


def scale_token(feature: np.ndarray, params: SsffParams) -> np.ndarray:
    """t = [GAP(F); mean(Conv1x1(meanDown2(F)))] with shape (n, 2 C_f)"""
    n, c = feature.shape[:2]
    pooled = global_avg_pool(feature).reshape(n, c)
    strided_mean = conv2d(mean_down_2(feature), params.smp_projection)
    strided_token = global_avg_pool(strided_mean).reshape(n, c)
    return np.concatenate([pooled, strided_token], axis=1)


def compute_ssff_gates(f3: np.ndarray, f4: np.ndarray, f5: np.ndarray, params: SsffParams) -> SsffGates:
    tokens = np.concatenate([scale_token(f, params) for f in (f3, f4, f5)], axis=1)
    mixed = logistic(linear(relu(linear(tokens, params.mixer_hidden)), params.mixer_output))
    n, c = tokens.shape[0], params.channels
    alphas = mixed[:, : 3 * c].reshape(n, 3, c)
    direction_gates = mixed[:, 3 * c :]
    probe_activation(SSFF_ALPHA_PROBE, alphas)
    probe_activation(SSFF_DIRECTION_GATE_PROBE, direction_gates)
    return SsffGates(
        alphas=alphas,
        g3_up=direction_gates[:, 0],
        g4_up=direction_gates[:, 1],
        g4_down=direction_gates[:, 2],
        g5_down=direction_gates[:, 3],
    )


def _per_channel(weights: np.ndarray) -> np.ndarray:
    return weights[:, :, None, None]


def _per_sample(gate: np.ndarray) -> np.ndarray:
    return gate[:, None, None, None]


def check_scale_contract(f3: np.ndarray, f4: np.ndarray, f5: np.ndarray, channels: int):
    for name, feature in (("F3", f3), ("F4", f4), ("F5", f5)):
        ensure_channels(feature, channels, name)
    (h3, w3), (h4, w4), (h5, w5) = f3.shape[2:], f4.shape[2:], f5.shape[2:]
    if not (h3 == 2 * h4 == 4 * h5 and w3 == 2 * w4 == 4 * w5) or not (f3.shape[0] == f4.shape[0] == f5.shape[0]):
        raise ContractViolationException(
            f"neck inputs must sit at strides 8/16/32 of one batch, got {f3.shape}, {f4.shape}, {f5.shape}"
        )


def ssff_fuse_with_gates(
    f3: np.ndarray, f4: np.ndarray, f5: np.ndarray, params: SsffParams, gates: SsffGates
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Bi-directional exchange with fixed gates. Every term reads the original (unfused) maps and
    alpha weights the input channels of the per-scale conv:
      F3' = Conv(a3 * F3) + g3_up * Up(Conv(F4))
      F4' = Conv(a4 * F4) + g4_up * Up(Conv(F5)) + g4_down * Down(Conv(F3))
      F5' = Conv(a5 * F5) + g5_down * Down(Conv(F4))
    """
    check_scale_contract(f3, f4, f5, params.channels)
    down = blur_then_down_2 if params.blur_before_down else mean_down_2
    alphas = gates.alphas

    top_down_into_3 = nearest_up_2(conv2d(f4, params.top_down_convs[0]))
    if params.edge_gate is not None:
        edge_gate = logistic(conv2d(sobel_gradient(f3), params.edge_gate))
        probe_activation(SSFF_EDGE_GATE_PROBE, edge_gate)
        top_down_into_3 = edge_gate * top_down_into_3
    top_down_into_4 = nearest_up_2(conv2d(f5, params.top_down_convs[1]))
    bottom_up_into_4 = down(conv2d(f3, params.bottom_up_convs[0]))
    bottom_up_into_5 = down(conv2d(f4, params.bottom_up_convs[1]))

    fused_3 = (
        conv2d(_per_channel(alphas[:, 0]) * f3, params.self_convs[0]) + _per_sample(gates.g3_up) * top_down_into_3
    )
    fused_4 = (
        conv2d(_per_channel(alphas[:, 1]) * f4, params.self_convs[1])
        + _per_sample(gates.g4_up) * top_down_into_4
        + _per_sample(gates.g4_down) * bottom_up_into_4
    )
    fused_5 = (
        conv2d(_per_channel(alphas[:, 2]) * f5, params.self_convs[2])
        + _per_sample(gates.g5_down) * bottom_up_into_5
    )
    return fused_3, fused_4, fused_5


def ssff_forward(
    f3: np.ndarray, f4: np.ndarray, f5: np.ndarray, params: SsffParams
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    check_scale_contract(f3, f4, f5, params.channels)
    gates = compute_ssff_gates(f3, f4, f5, params)
    return ssff_fuse_with_gates(f3, f4, f5, params, gates)
