import logging
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


logger = logging.getLogger(__name__)


def as_float32_array(value) -> np.ndarray:
    # np.asarray keeps the same object when the dtype already matches, so tied layers stay tied
    return np.asarray(value, dtype=np.float32)


class ConvLayer(BaseModel):
    """
    A 2D convolution: weight (out_channels, in_channels / groups, kernel_h, kernel_w) plus optional bias
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    weight: np.ndarray
    bias: Optional[np.ndarray] = None
    stride: int = Field(1, ge=1)
    padding: int = Field(0, ge=0)
    dilation: int = Field(1, ge=1)
    groups: int = Field(1, ge=1)

    @field_validator("weight", "bias", mode="before")
    @classmethod
    def cast_to_float32(cls, value):
        return None if value is None else as_float32_array(value)

    @model_validator(mode="after")
    def check_shapes(self):
        if self.weight.ndim != 4:
            raise ValueError(
                f"conv weight must have shape (out, in/groups, kh, kw), got {self.weight.shape}"
            )
        if self.out_channels % self.groups != 0:
            raise ValueError(
                f"out_channels ({self.out_channels}) must be divisible by groups ({self.groups})"
            )
        if self.bias is not None and self.bias.shape != (self.out_channels,):
            raise ValueError(
                f"conv bias must have shape ({self.out_channels},), got {self.bias.shape}"
            )
        return self

    @property
    def out_channels(self) -> int:
        return int(self.weight.shape[0])

    @property
    def in_channels(self) -> int:
        return int(self.weight.shape[1] * self.groups)

    @property
    def kernel_size(self) -> Tuple[int, int]:
        return int(self.weight.shape[2]), int(self.weight.shape[3])

    @property
    def is_depthwise(self) -> bool:
        return self.groups == self.in_channels == self.out_channels

    @property
    def parameter_count(self) -> int:
        return int(self.weight.size) + (self.out_channels if self.bias is not None else 0)

    def output_spatial_shape(self, height: int, width: int) -> Tuple[int, int]:
        kernel_h, kernel_w = self.kernel_size
        out_h = (height + 2 * self.padding - self.dilation * (kernel_h - 1) - 1) // self.stride + 1
        out_w = (width + 2 * self.padding - self.dilation * (kernel_w - 1) - 1) // self.stride + 1
        return out_h, out_w


class LinearLayer(BaseModel):
    """
    A dense map on (n, in_features) vectors: weight (out_features, in_features) plus optional bias
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    weight: np.ndarray
    bias: Optional[np.ndarray] = None

    @field_validator("weight", "bias", mode="before")
    @classmethod
    def cast_to_float32(cls, value):
        return None if value is None else as_float32_array(value)

    @model_validator(mode="after")
    def check_shapes(self):
        if self.weight.ndim != 2:
            raise ValueError(f"linear weight must be 2D, got {self.weight.shape}")
        if self.bias is not None and self.bias.shape != (self.weight.shape[0],):
            raise ValueError(
                f"linear bias must have shape ({self.weight.shape[0]},), got {self.bias.shape}"
            )
        return self

    @property
    def in_features(self) -> int:
        return int(self.weight.shape[1])

    @property
    def out_features(self) -> int:
        return int(self.weight.shape[0])

    @property
    def parameter_count(self) -> int:
        return int(self.weight.size) + (self.out_features if self.bias is not None else 0)


class NormLayer(BaseModel):
    """
    Group normalization with per-channel affine gamma / beta
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    num_groups: int = Field(ge=1)
    gamma: np.ndarray
    beta: np.ndarray
    eps: float = Field(1e-5, gt=0)

    @field_validator("gamma", "beta", mode="before")
    @classmethod
    def cast_to_float32(cls, value):
        return as_float32_array(value)

    @model_validator(mode="after")
    def check_groups(self):
        if self.gamma.shape != self.beta.shape or self.gamma.ndim != 1:
            raise ValueError(
                f"gamma and beta must be matching 1D vectors, got {self.gamma.shape} and {self.beta.shape}"
            )
        if self.channels % self.num_groups != 0:
            raise ValueError(
                f"channels ({self.channels}) must be divisible by num_groups ({self.num_groups})"
            )
        return self

    @property
    def channels(self) -> int:
        return int(self.gamma.shape[0])

    @property
    def parameter_count(self) -> int:
        return 2 * self.channels

    @classmethod
    def identity(cls, channels: int, num_groups: int, eps: float = 1e-5) -> "NormLayer":
        return cls(
            num_groups=num_groups,
            gamma=np.ones(channels, dtype=np.float32),
            beta=np.zeros(channels, dtype=np.float32),
            eps=eps,
        )
