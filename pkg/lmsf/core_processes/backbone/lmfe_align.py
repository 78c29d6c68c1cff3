import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from lmsf.core_processes.tensor_core.activations import relu
from lmsf.core_processes.tensor_core.conv2d import conv2d
from lmsf.core_processes.tensor_core.group_norm import group_norm
from lmsf.core_processes.tensor_core.layer_models import ConvLayer, NormLayer


class ConvGroupNormLayer(BaseModel):
    """conv -> GroupNorm -> ReLU; the stem, the downsampling pointwise convs and LMFE all use it"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    conv: ConvLayer
    norm: NormLayer

    @model_validator(mode="after")
    def check_norm_channels(self):
        if self.norm.channels != self.conv.out_channels:
            raise ValueError(
                f"norm over {self.norm.channels} channels cannot follow conv weight {self.conv.weight.shape}"
            )
        return self

    @property
    def out_channels(self) -> int:
        return self.conv.out_channels


def conv_group_norm_relu(x: np.ndarray, layer: ConvGroupNormLayer) -> np.ndarray:
    return relu(group_norm(conv2d(x, layer.conv), layer.norm))


def lmfe_align(pyramid_level: np.ndarray, layer: ConvGroupNormLayer) -> np.ndarray:
    """Align one pyramid level to the fused width: ReLU(GN(Conv1x1(P))), spatial size preserved."""
    return conv_group_norm_relu(pyramid_level, layer)
