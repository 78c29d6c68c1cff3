import logging

import numpy as np
from pydantic import BaseModel

from lmsf.core_processes.head.edge_loss import downsample_label_map, edge_loss
from lmsf.core_processes.model_assembly.lmsf_forward import lmsf_forward_with_intermediates
from lmsf.core_processes.model_assembly.lmsf_model import LmsfModel
from lmsf.core_processes.neck.gradient_consistency_loss import P3_STRIDE, gradient_consistency_loss

logger = logging.getLogger(__name__)


class AuxiliaryLossReport(BaseModel):
    gradient_consistency: float
    edge: float

    @property
    def total(self) -> float:
        return self.gradient_consistency + self.edge


def evaluate_auxiliary_losses(model: LmsfModel, image: np.ndarray, gt_label_map: np.ndarray) -> AuxiliaryLossReport:
    """
    Forward-only values of the gradient-consistency loss (stride-8 refined map vs image edges) and the
    edge loss (head features vs label boundaries). `gt_label_map` is (H, W) at the image resolution.
    """
    result = lmsf_forward_with_intermediates(model, image, out_stride=8)
    config = model.config
    gradient_consistency = gradient_consistency_loss(
        result.refined_p3, model.neck.tfe.edge_projection, image, config.lambda_gc
    )
    edge = edge_loss(
        result.head_features,
        model.head.edge_head,
        downsample_label_map(gt_label_map, P3_STRIDE),
        config.lambda_edge,
    )
    report = AuxiliaryLossReport(gradient_consistency=gradient_consistency, edge=edge)
    logger.info(f"Auxiliary losses: gradient consistency {gradient_consistency:.6f}, edge {edge:.6f}")
    return report
