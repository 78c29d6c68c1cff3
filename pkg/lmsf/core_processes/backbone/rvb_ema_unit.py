from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from lmsf.core_processes.backbone.ema_attention import EmaParams, ema_forward
from lmsf.core_processes.reparameterization.reparameterizable_conv import RepConv
from lmsf.core_processes.tensor_core.activations import relu
from lmsf.core_processes.tensor_core.group_norm import group_norm
from lmsf.core_processes.tensor_core.layer_models import NormLayer


class RvbEmaUnit(BaseModel):
    """
    One re-parameterizable unit: optional EMA on the input, a depthwise token mixer
    ({3x3 DW, 1x1 DW, identity} in train form), GN + ReLU, then an expand/project channel mixer.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    ema: Optional[EmaParams] = None
    token_mixer: RepConv
    token_norm: NormLayer
    channel_expand: RepConv
    channel_project: RepConv


def rvb_ema_unit_forward(y: np.ndarray, unit: RvbEmaUnit, form: str) -> np.ndarray:
    mixer_input = ema_forward(y, unit.ema) if unit.ema is not None else y
    tokens = relu(group_norm(unit.token_mixer.forward(mixer_input, form), unit.token_norm))
    channels = unit.channel_project.forward(relu(unit.channel_expand.forward(tokens, form)), form)
    return y + channels
