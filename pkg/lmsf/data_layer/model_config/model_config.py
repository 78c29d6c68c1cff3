import logging
import math
from pathlib import Path
from typing import List, Tuple, Union

import toml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from lmsf.system.paths_and_filenames.path_getters import get_default_config_toml_path

logger = logging.getLogger(__name__)

STAGE_COUNT = 4
PYRAMID_STRIDES = (8, 16, 32)
INPUT_SIZE_MULTIPLE = 32
UNITS_PER_C2F_PRO_BLOCK = 3
WIDTH_DIVISOR = 8


def make_divisible(width: float, divisor: int = WIDTH_DIVISOR) -> int:
    return max(divisor, int(math.ceil(width / divisor)) * divisor)


class ModelConfig(BaseModel):
    """
    Every width, depth and switch of the network plus the loss weights and post-processing threshold.
    Stored as flat TOML both on disk and inside the weight-file header.
    """

    model_config = ConfigDict(extra="forbid")

    input_size: int = Field(640, ge=INPUT_SIZE_MULTIPLE)
    width_multiplier: float = Field(1.375, gt=0)
    stem_width: int = Field(16, ge=1)
    stage_widths: List[int] = [32, 64, 128, 256]
    fused_channels: int = Field(64, ge=1)
    head_channels: int = Field(224, ge=1)
    shared_block_count: int = Field(2, ge=1)
    ema_reduction: int = Field(4, ge=1)
    ema_spatial_kernel: int = Field(5, ge=1)
    ema_strides: List[int] = [16, 32]
    tfe_reduction: int = Field(4, ge=1)
    gn_groups: int = Field(4, ge=1)
    norm_eps: float = Field(1e-5, gt=0)
    lambda_gc: float = Field(0.1, ge=0)
    lambda_edge: float = Field(0.1, ge=0)
    num_classes: int = Field(4, ge=1)
    min_instance_area: int = Field(32, ge=1)
    edge_gate_p3: bool = False
    blur_before_down: bool = True
    share_head_weights: bool = True

    @field_validator("input_size")
    @classmethod
    def check_input_size_divisible(cls, value: int) -> int:
        if value % INPUT_SIZE_MULTIPLE != 0:
            raise ValueError(f"input_size must be divisible by {INPUT_SIZE_MULTIPLE}, got {value}")
        return value

    @field_validator("stage_widths")
    @classmethod
    def check_stage_widths(cls, value: List[int]) -> List[int]:
        if len(value) != STAGE_COUNT:
            raise ValueError(f"stage_widths must list exactly {STAGE_COUNT} stages, got {len(value)}")
        if any(width < 1 for width in value):
            raise ValueError(f"stage_widths must all be >= 1, got {value}")
        return value

    @field_validator("ema_strides")
    @classmethod
    def check_ema_strides(cls, value: List[int]) -> List[int]:
        unknown = sorted(set(value) - set(PYRAMID_STRIDES))
        if unknown:
            raise ValueError(f"ema_strides must be a subset of {list(PYRAMID_STRIDES)}, got unknown strides {unknown}")
        return sorted(set(value))

    @field_validator("ema_spatial_kernel")
    @classmethod
    def check_kernel_is_odd(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError(f"ema_spatial_kernel must be odd, got {value}")
        return value

    @model_validator(mode="after")
    def check_group_divisibility(self):
        grouped_widths = {
            "stem width": self.scaled_stem_width,
            "fused_channels": self.fused_channels,
            "head_channels": self.head_channels,
        }
        for stage_index, width in enumerate(self.scaled_stage_widths):
            grouped_widths[f"stage {stage_index} width"] = width
            grouped_widths[f"stage {stage_index} half width"] = width // 2
        for name, width in grouped_widths.items():
            if width % self.gn_groups != 0:
                raise ValueError(f"gn_groups ({self.gn_groups}) must divide the {name} ({width})")

        for stage_index, width in enumerate(self.scaled_stage_widths):
            if width % 2 != 0:
                raise ValueError(f"stage {stage_index} width ({width}) must be even to split into halves")
            if self.ema_enabled_at_stage(stage_index) and (width // 2) % self.ema_reduction != 0:
                raise ValueError(
                    f"ema_reduction ({self.ema_reduction}) must divide the stage {stage_index} half width ({width // 2})"
                )
        if self.fused_channels % self.tfe_reduction != 0:
            raise ValueError(
                f"tfe_reduction ({self.tfe_reduction}) must divide fused_channels ({self.fused_channels})"
            )
        return self

    @property
    def scaled_stem_width(self) -> int:
        return make_divisible(self.stem_width * self.width_multiplier)

    @property
    def scaled_stage_widths(self) -> List[int]:
        return [make_divisible(width * self.width_multiplier) for width in self.stage_widths]

    @property
    def stage_strides(self) -> Tuple[int, ...]:
        return tuple(4 * 2**stage_index for stage_index in range(STAGE_COUNT))

    @property
    def pyramid_channels(self) -> Tuple[int, int, int]:
        widths = self.scaled_stage_widths
        return widths[1], widths[2], widths[3]

    def ema_enabled_at_stage(self, stage_index: int) -> bool:
        return self.stage_strides[stage_index] in self.ema_strides

    def to_toml_string(self) -> str:
        return toml.dumps(self.model_dump())

    @classmethod
    def from_toml_string(cls, toml_text: str) -> "ModelConfig":
        return cls(**toml.loads(toml_text))


def load_model_config(config_path: Union[str, Path, None] = None) -> ModelConfig:
    config_path = Path(config_path) if config_path is not None else get_default_config_toml_path()
    logger.info(f"Loading model config from {config_path}")
    return ModelConfig.from_toml_string(config_path.read_text(encoding="utf-8"))


def save_model_config(config: ModelConfig, config_path: Union[str, Path]) -> Path:
    config_path = Path(config_path)
    config_path.parent.mkdir(parents=True, exist_ok=True)
    config_path.write_text(config.to_toml_string(), encoding="utf-8")
    logger.info(f"Saved model config to {config_path}")
    return config_path
