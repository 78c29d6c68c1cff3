import logging
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from lmsf.core_processes.tensor_core.conv2d import conv2d
from lmsf.core_processes.tensor_core.feature_map_contract import ensure_channels
from lmsf.core_processes.tensor_core.layer_models import ConvLayer, as_float32_array
from lmsf.utilities.lmsf_exceptions import ContractViolationException

logger = logging.getLogger(__name__)


class AffineNorm(BaseModel):
    """
    Inference-mode normalization with frozen per-channel statistics:
    y = (x - running_mean) * gamma / sqrt(running_var + eps) + beta
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    running_mean: np.ndarray
    running_var: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    eps: float = 1e-5

    @field_validator("running_mean", "running_var", "gamma", "beta", mode="before")
    @classmethod
    def cast_to_float32(cls, value):
        return as_float32_array(value)

    @model_validator(mode="after")
    def check_matching_vectors(self):
        shapes = {self.running_mean.shape, self.running_var.shape, self.gamma.shape, self.beta.shape}
        if len(shapes) != 1 or self.gamma.ndim != 1:
            raise ValueError(f"affine norm statistics must be matching 1D vectors, got shapes {shapes}")
        return self

    @property
    def channels(self) -> int:
        return int(self.gamma.shape[0])

    @property
    def parameter_count(self) -> int:
        # running statistics are buffers, not parameters
        return 2 * self.channels

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = ensure_channels(x, self.channels)
        scale = self.gamma / np.sqrt(self.running_var + np.float32(self.eps))
        shift = self.beta - self.running_mean * scale
        return x * scale[None, :, None, None] + shift[None, :, None, None]

    @classmethod
    def identity(cls, channels: int, eps: float = 0.0) -> "AffineNorm":
        return cls(
            running_mean=np.zeros(channels),
            running_var=np.ones(channels),
            gamma=np.ones(channels),
            beta=np.zeros(channels),
            eps=eps,
        )


class ConvBranch(BaseModel):
    """One parallel path of a re-parameterizable block. `conv=None` is the identity branch."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    conv: Optional[ConvLayer] = None
    norm: Optional[AffineNorm] = None

    @property
    def is_identity(self) -> bool:
        return self.conv is None

    @property
    def parameter_count(self) -> int:
        conv_count = self.conv.parameter_count if self.conv is not None else 0
        norm_count = self.norm.parameter_count if self.norm is not None else 0
        return conv_count + norm_count

    def forward(self, x: np.ndarray) -> np.ndarray:
        y = x if self.conv is None else conv2d(x, self.conv)
        if self.norm is not None:
            y = self.norm.apply(y)
        return y


class BranchSpec(BaseModel):
    """
    Parallel branches that read the same input and whose outputs are summed.

    Compatibility (shared stride and groups, centred odd kernels, a single identity that needs
    matching channels) is checked by `check_compatibility`, which the fusion and the forward call.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    branches: List[ConvBranch] = Field(min_length=1)
    in_channels: int = Field(ge=1)
    out_channels: int = Field(ge=1)

    @property
    def conv_branches(self) -> List[ConvBranch]:
        return [branch for branch in self.branches if not branch.is_identity]

    @property
    def identity_branches(self) -> List[ConvBranch]:
        return [branch for branch in self.branches if branch.is_identity]

    @property
    def stride(self) -> int:
        convs = self.conv_branches
        return convs[0].conv.stride if convs else 1

    @property
    def groups(self) -> int:
        convs = self.conv_branches
        return convs[0].conv.groups if convs else self.in_channels

    @property
    def kernel_size(self) -> int:
        return max((branch.conv.kernel_size[0] for branch in self.conv_branches), default=1)

    @property
    def parameter_count(self) -> int:
        return sum(branch.parameter_count for branch in self.branches)

    def check_compatibility(self):
        identities = self.identity_branches
        if len(identities) > 1:
            raise ContractViolationException(
                f"a branch spec holds at most one identity branch, got {len(identities)}"
            )
        if identities and self.in_channels != self.out_channels:
            raise ContractViolationException(
                f"an identity branch needs in_channels == out_channels, "
                f"got {self.in_channels} -> {self.out_channels}"
            )

        strides = {branch.conv.stride for branch in self.conv_branches}
        groups = {branch.conv.groups for branch in self.conv_branches}
        if len(strides) > 1:
            raise ContractViolationException(f"branches have mixed strides {sorted(strides)}")
        if len(groups) > 1:
            raise ContractViolationException(f"branches have incompatible groups {sorted(groups)}")
        if identities and self.stride != 1:
            raise ContractViolationException(f"an identity branch needs stride 1, got stride {self.stride}")

        for branch in self.conv_branches:
            conv = branch.conv
            kernel_h, kernel_w = conv.kernel_size
            if kernel_h != kernel_w or kernel_h % 2 == 0:
                raise ContractViolationException(f"branch kernels must be square and odd, got {conv.kernel_size}")
            if conv.dilation != 1 or conv.padding != kernel_h // 2:
                raise ContractViolationException(
                    f"branch {conv.kernel_size} kernel must be centred (padding {kernel_h // 2}, dilation 1), "
                    f"got padding {conv.padding}, dilation {conv.dilation}"
                )
            if conv.in_channels != self.in_channels or conv.out_channels != self.out_channels:
                raise ContractViolationException(
                    f"branch weight {conv.weight.shape} (groups={conv.groups}) does not map "
                    f"{self.in_channels} -> {self.out_channels} channels"
                )
        for branch in self.branches:
            if branch.norm is not None and branch.norm.channels != self.out_channels:
                raise ContractViolationException(
                    f"branch norm has {branch.norm.channels} channels, expected {self.out_channels}"
                )

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Train-form evaluation: the sum of every branch output."""
        self.check_compatibility()
        output = self.branches[0].forward(x)
        for branch in self.branches[1:]:
            output = output + branch.forward(x)
        return output
