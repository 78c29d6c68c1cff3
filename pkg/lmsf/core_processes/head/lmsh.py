import logging
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from lmsf.core_processes.tensor_core.activation_probe import probe_activation
from lmsf.core_processes.tensor_core.activations import logistic, relu
from lmsf.core_processes.tensor_core.conv2d import conv2d
from lmsf.core_processes.tensor_core.feature_map_contract import ensure_channels
from lmsf.core_processes.tensor_core.group_norm import group_norm
from lmsf.core_processes.tensor_core.layer_models import ConvLayer, NormLayer
from lmsf.core_processes.tensor_core.resample import nearest_up_2
from lmsf.utilities.lmsf_exceptions import ContractViolationException

logger = logging.getLogger(__name__)

OUTPUT_STRIDES = (8, 4, 1)
LMSH_FUSION_GATE_PROBE = "lmsh.fusion_gate"
LMSH_U3_PROBE = "lmsh.u3"
LMSH_DEEP_MIX_PROBE = "lmsh.deep_mix"
LMSH_FUSED_PROBE = "lmsh.fused"


class SeparableResidualBlock(BaseModel):
    """x + PW(ReLU(GN(DW3x3(x))))"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    depthwise: ConvLayer
    norm: NormLayer
    pointwise: ConvLayer


class LmshParams(BaseModel):
    """
    Head parameters. `projections` and `blocks` hold one entry when the scales share weights and
    three (one per scale) when they do not; with one entry every scale reads the same arrays.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    projections: List[ConvLayer]
    blocks: List[List[SeparableResidualBlock]]
    # [stride 16, stride 32]
    align_convs: List[ConvLayer]
    gate_conv: ConvLayer
    deep_mix: ConvLayer
    cls8: ConvLayer
    cls4_depthwise: ConvLayer
    cls4_pointwise: ConvLayer
    cls1: ConvLayer
    edge_head: ConvLayer

    @model_validator(mode="after")
    def check_sharing(self):
        if len(self.projections) not in (1, 3) or len(self.blocks) != len(self.projections):
            raise ValueError(
                f"head needs 1 (shared) or 3 (per-scale) projection/block sets, "
                f"got {len(self.projections)} projections and {len(self.blocks)} block sets"
            )
        if len(self.align_convs) != 2:
            raise ValueError(f"head needs 2 align convs, got {len(self.align_convs)}")
        return self

    @property
    def shares_weights(self) -> bool:
        return len(self.projections) == 1

    @property
    def head_channels(self) -> int:
        return self.projections[0].out_channels

    @property
    def num_classes(self) -> int:
        return self.cls8.out_channels

    def scale_projection(self, scale_index: int) -> ConvLayer:
        return self.projections[0 if self.shares_weights else scale_index]

    def scale_blocks(self, scale_index: int) -> List[SeparableResidualBlock]:
        return self.blocks[0 if self.shares_weights else scale_index]


def separable_residual_block_forward(x: np.ndarray, block: SeparableResidualBlock) -> np.ndarray:
    return x + conv2d(relu(group_norm(conv2d(x, block.depthwise), block.norm)), block.pointwise)


def lmsh_scale_features(
    f3_refined: np.ndarray, f4_hat: np.ndarray, f5_hat: np.ndarray, params: LmshParams
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project each scale to the head width, run the (shared) residual blocks, and align to the stride-8 grid."""
    features = []
    for scale_index, feature in enumerate((f3_refined, f4_hat, f5_hat)):
        projection = params.scale_projection(scale_index)
        x = conv2d(ensure_channels(feature, projection.in_channels, f"head input {scale_index}"), projection)
        for block in params.scale_blocks(scale_index):
            x = separable_residual_block_forward(x, block)
        features.append(x)

    u3 = features[0]
    u4 = nearest_up_2(conv2d(features[1], params.align_convs[0]))
    u5 = nearest_up_2(nearest_up_2(conv2d(features[2], params.align_convs[1])))
    if u4.shape != u3.shape or u5.shape != u3.shape:
        raise ContractViolationException(
            f"head inputs must sit at strides 8/16/32, got {f3_refined.shape}, {f4_hat.shape}, {f5_hat.shape}"
        )
    return u3, u4, u5


def lmsh_fuse(u3: np.ndarray, u4: np.ndarray, u5: np.ndarray, params: LmshParams) -> np.ndarray:
    """G = A * U3 + (1 - A) * DeepMix([U4, U5]) with A = logistic(GateConv([U3, U4, U5]))"""
    fusion_gate = logistic(conv2d(np.concatenate([u3, u4, u5], axis=1), params.gate_conv))
    deep = conv2d(np.concatenate([u4, u5], axis=1), params.deep_mix)
    fused = fusion_gate * u3 + (np.float32(1.0) - fusion_gate) * deep
    probe_activation(LMSH_FUSION_GATE_PROBE, fusion_gate)
    probe_activation(LMSH_U3_PROBE, u3)
    probe_activation(LMSH_DEEP_MIX_PROBE, deep)
    probe_activation(LMSH_FUSED_PROBE, fused)
    return fused


def lmsh_decode(fused: np.ndarray, params: LmshParams, out_stride: int) -> np.ndarray:
    if out_stride not in OUTPUT_STRIDES:
        raise ContractViolationException(f"out_stride must be one of {OUTPUT_STRIDES}, got {out_stride}")
    logits = conv2d(fused, params.cls8)
    if out_stride == 8:
        return logits
    logits = conv2d(conv2d(nearest_up_2(logits), params.cls4_depthwise), params.cls4_pointwise)
    if out_stride == 4:
        return logits
    return conv2d(nearest_up_2(nearest_up_2(logits)), params.cls1)


def lmsh_features(f3_refined: np.ndarray, f4_hat: np.ndarray, f5_hat: np.ndarray, params: LmshParams) -> np.ndarray:
    return lmsh_fuse(*lmsh_scale_features(f3_refined, f4_hat, f5_hat, params), params)


def lmsh_forward(
    f3_refined: np.ndarray, f4_hat: np.ndarray, f5_hat: np.ndarray, params: LmshParams, out_stride: int = 1
) -> np.ndarray:
    """Dense class logits of shape (n, C_cls, H / out_stride, W / out_stride)."""
    return lmsh_decode(lmsh_features(f3_refined, f4_hat, f5_hat, params), params, out_stride)
