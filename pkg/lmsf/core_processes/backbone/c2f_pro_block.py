import logging
from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from lmsf.core_processes.backbone.rvb_ema_unit import RvbEmaUnit, rvb_ema_unit_forward
from lmsf.core_processes.tensor_core.conv2d import conv2d
from lmsf.core_processes.tensor_core.feature_map_contract import ensure_channels
from lmsf.core_processes.tensor_core.layer_models import ConvLayer
from lmsf.data_layer.model_config.model_config import UNITS_PER_C2F_PRO_BLOCK
from lmsf.utilities.lmsf_exceptions import ContractViolationException

logger = logging.getLogger(__name__)


class C2fProBlock(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    in_conv: ConvLayer
    units: List[RvbEmaUnit]
    out_conv: ConvLayer

    @model_validator(mode="after")
    def check_unit_count(self):
        if len(self.units) != UNITS_PER_C2F_PRO_BLOCK:
            raise ValueError(f"a C2f-Pro block holds exactly {UNITS_PER_C2F_PRO_BLOCK} units, got {len(self.units)}")
        return self

    @property
    def ema_enabled(self) -> bool:
        return all(unit.ema is not None for unit in self.units)


def c2f_pro_forward(x: np.ndarray, block: C2fProBlock, form: str) -> np.ndarray:
    """
    Split the in-projection into a shortcut half and a transform half, run the transform half through
    the three units in sequence, and merge [shortcut, Y1, Y2, Y3] with the out-projection.
    """
    x = ensure_channels(x, block.in_conv.in_channels, "C2f-Pro input")
    projected = conv2d(x, block.in_conv)
    channels = projected.shape[1]
    if channels % 2 != 0:
        raise ContractViolationException(
            f"C2f-Pro in-projection produced {channels} channels (shape {projected.shape}); an even count is needed to split"
        )

    half = channels // 2
    shortcut, transform = projected[:, :half], projected[:, half:]
    merged_parts = [shortcut]
    for unit in block.units:
        transform = rvb_ema_unit_forward(transform, unit, form)
        merged_parts.append(transform)
    return conv2d(np.concatenate(merged_parts, axis=1), block.out_conv)
