import logging
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from lmsf.core_processes.backbone.c2f_pro_block import C2fProBlock, c2f_pro_forward
from lmsf.core_processes.backbone.lmfe_align import ConvGroupNormLayer, conv_group_norm_relu
from lmsf.core_processes.tensor_core.conv2d import conv2d
from lmsf.core_processes.tensor_core.feature_map_contract import ensure_feature_map
from lmsf.core_processes.tensor_core.layer_models import ConvLayer
from lmsf.core_processes.tensor_core.mac_profiler import profiler_scope
from lmsf.data_layer.model_config.model_config import INPUT_SIZE_MULTIPLE, STAGE_COUNT
from lmsf.utilities.lmsf_exceptions import ContractViolationException

logger = logging.getLogger(__name__)

IMAGE_CHANNELS = 3


class DownsampleLayer(BaseModel):
    """Stride-2 depthwise-separable downsampling: DW 3x3 s2 -> PW 1x1 -> GN -> ReLU"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    depthwise: ConvLayer
    pointwise: ConvGroupNormLayer


class BackboneStage(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    downsample: DownsampleLayer
    block: C2fProBlock


class BackboneParams(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    stem: ConvGroupNormLayer
    stages: List[BackboneStage]
    lmfe: List[ConvGroupNormLayer]

    @model_validator(mode="after")
    def check_stage_count(self):
        if len(self.stages) != STAGE_COUNT:
            raise ValueError(f"the backbone has exactly {STAGE_COUNT} stages, got {len(self.stages)}")
        if len(self.lmfe) != 3:
            raise ValueError(f"LMFE aligns exactly 3 pyramid levels, got {len(self.lmfe)}")
        return self

    @property
    def stage_widths(self) -> List[int]:
        return [stage.block.out_conv.out_channels for stage in self.stages]


class FeaturePyramid(BaseModel):
    """P3 / P4 / P5 taps at strides 8 / 16 / 32"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    p3: np.ndarray
    p4: np.ndarray
    p5: np.ndarray

    @model_validator(mode="after")
    def check_strides(self):
        (h3, w3), (h4, w4), (h5, w5) = (level.shape[2:] for level in self.levels)
        if not (h3 == 2 * h4 == 4 * h5 and w3 == 2 * w4 == 4 * w5):
            raise ValueError(
                f"pyramid levels must halve per step, got {self.p3.shape}, {self.p4.shape}, {self.p5.shape}"
            )
        return self

    @property
    def levels(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.p3, self.p4, self.p5

    @property
    def channel_counts(self) -> Tuple[int, int, int]:
        return tuple(int(level.shape[1]) for level in self.levels)


def check_image_contract(image: np.ndarray) -> np.ndarray:
    image = ensure_feature_map(image, "image")
    if image.shape[1] != IMAGE_CHANNELS:
        raise ContractViolationException(f"image must have {IMAGE_CHANNELS} channels, got shape {image.shape}")
    height, width = image.shape[2:]
    if height % INPUT_SIZE_MULTIPLE != 0 or width % INPUT_SIZE_MULTIPLE != 0:
        raise ContractViolationException(
            f"image height and width must be multiples of {INPUT_SIZE_MULTIPLE}, got {height}x{width}"
        )
    return image


def downsample_forward(x: np.ndarray, layer: DownsampleLayer) -> np.ndarray:
    return conv_group_norm_relu(conv2d(x, layer.depthwise), layer.pointwise)


def backbone_forward(image: np.ndarray, params: BackboneParams, form: str) -> FeaturePyramid:
    """
    Stem (stride 2) then four downsample + C2f-Pro stages at strides 4, 8, 16, 32.
    The last three stage outputs are the pyramid.
    """
    image = check_image_contract(image)
    with profiler_scope("stem"):
        x = conv_group_norm_relu(image, params.stem)

    stage_outputs = []
    for stage_index, stage in enumerate(params.stages):
        with profiler_scope(f"stages.{stage_index}"):
            x = downsample_forward(x, stage.downsample)
            x = c2f_pro_forward(x, stage.block, form)
        stage_outputs.append(x)

    return FeaturePyramid(p3=stage_outputs[1], p4=stage_outputs[2], p5=stage_outputs[3])
