import logging
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from lmsf.core_processes.backbone.backbone_forward import FeaturePyramid, backbone_forward
from lmsf.core_processes.backbone.lmfe_align import lmfe_align
from lmsf.core_processes.head.lmsh import lmsh_decode, lmsh_features
from lmsf.core_processes.model_assembly.lmsf_model import LmsfModel
from lmsf.core_processes.neck.ssff import ssff_forward
from lmsf.core_processes.neck.tfe import tfe_forward
from lmsf.core_processes.tensor_core.mac_profiler import profiler_scope

logger = logging.getLogger(__name__)

BACKBONE_SCOPE = "backbone"
NECK_SCOPE = "neck"
HEAD_SCOPE = "head"


class LmsfForwardResult(BaseModel):
    """Logits plus the intermediate maps the auxiliary losses and diagnostics read."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    logits: np.ndarray
    pyramid: FeaturePyramid
    aligned: Tuple[np.ndarray, np.ndarray, np.ndarray]
    fused: Tuple[np.ndarray, np.ndarray, np.ndarray]
    refined_p3: np.ndarray
    head_features: np.ndarray


def lmsf_forward_with_intermediates(
    model: LmsfModel, image: np.ndarray, out_stride: int = 1, form: Optional[str] = None
) -> LmsfForwardResult:
    form = form or model.form
    with profiler_scope(BACKBONE_SCOPE):
        pyramid = backbone_forward(image, model.backbone, form)
        with profiler_scope("lmfe"):
            aligned = tuple(lmfe_align(level, layer) for level, layer in zip(pyramid.levels, model.backbone.lmfe))

    with profiler_scope(NECK_SCOPE):
        with profiler_scope("ssff"):
            fused = ssff_forward(*aligned, model.neck.ssff)
        with profiler_scope("tfe"):
            refined_p3 = tfe_forward(*fused, model.neck.tfe)

    with profiler_scope(HEAD_SCOPE):
        head_features = lmsh_features(refined_p3, fused[1], fused[2], model.head)
        logits = lmsh_decode(head_features, model.head, out_stride)

    return LmsfForwardResult(
        logits=logits,
        pyramid=pyramid,
        aligned=aligned,
        fused=fused,
        refined_p3=refined_p3,
        head_features=head_features,
    )


def lmsf_forward(model: LmsfModel, image: np.ndarray, out_stride: int = 1, form: Optional[str] = None) -> np.ndarray:
    """Image (n, 3, H, W) -> class logits (n, C_cls, H / out_stride, W / out_stride)."""
    return lmsf_forward_with_intermediates(model, image, out_stride, form).logits
