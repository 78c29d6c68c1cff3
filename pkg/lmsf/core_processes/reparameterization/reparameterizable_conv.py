import logging
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from lmsf.core_processes.reparameterization.branch_spec import BranchSpec
from lmsf.core_processes.reparameterization.fuse_branches import fuse_branches
from lmsf.core_processes.tensor_core.conv2d import conv2d
from lmsf.core_processes.tensor_core.layer_models import ConvLayer
from lmsf.system.paths_and_filenames.file_and_folder_names import DEPLOY_FORM, TRAIN_FORM
from lmsf.utilities.lmsf_exceptions import ContractViolationException

logger = logging.getLogger(__name__)


class RepConv(BaseModel):
    """
    A convolution that exists in train form (parallel branches), deploy form (one fused conv), or both.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    branches: Optional[BranchSpec] = None
    fused: Optional[ConvLayer] = None

    @model_validator(mode="after")
    def check_has_a_form(self):
        if self.branches is None and self.fused is None:
            raise ValueError("a RepConv needs train-form branches, a fused deploy conv, or both")
        return self

    @property
    def form(self) -> str:
        return TRAIN_FORM if self.branches is not None else DEPLOY_FORM

    @property
    def out_channels(self) -> int:
        return self.fused.out_channels if self.fused is not None else self.branches.out_channels

    @property
    def parameter_count(self) -> int:
        if self.branches is not None:
            return self.branches.parameter_count
        return self.fused.parameter_count

    def forward(self, x: np.ndarray, form: str) -> np.ndarray:
        if form == TRAIN_FORM:
            if self.branches is None:
                raise ContractViolationException("train-form forward requested but this conv only holds fused weights")
            return self.branches.forward(x)
        if form == DEPLOY_FORM:
            if self.fused is None:
                raise ContractViolationException(
                    "deploy-form forward requested but this conv has not been fused; run fuse_model first"
                )
            return conv2d(x, self.fused)
        raise ContractViolationException(f"form must be '{TRAIN_FORM}' or '{DEPLOY_FORM}', got '{form}'")

    def fuse(self) -> "RepConv":
        if self.branches is None:
            return self
        return RepConv(fused=fuse_branches(self.branches))


def fuse_reparameterizable(value: Any) -> Any:
    """
    Return a copy of `value` where every RepConv reachable through pydantic fields, lists and tuples
    holds only its fused convolution. Everything else is shared, not copied.
    """
    if isinstance(value, RepConv):
        return value.fuse()
    if isinstance(value, BaseModel):
        updates = {}
        for field_name in type(value).model_fields:
            field_value = getattr(value, field_name)
            fused_value = fuse_reparameterizable(field_value)
            if fused_value is not field_value:
                updates[field_name] = fused_value
        return value.model_copy(update=updates) if updates else value
    if isinstance(value, (list, tuple)):
        fused_items = [fuse_reparameterizable(item) for item in value]
        if all(fused is item for fused, item in zip(fused_items, value)):
            return value
        return type(value)(fused_items)
    return value
