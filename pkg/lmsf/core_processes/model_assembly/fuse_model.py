import logging
from typing import List

from lmsf.core_processes.backbone.c2f_pro_block import c2f_pro_forward
from lmsf.core_processes.model_assembly.lmsf_forward import lmsf_forward
from lmsf.core_processes.model_assembly.lmsf_model import LmsfModel
from lmsf.core_processes.reparameterization.certify_equivalence import (
    DEFAULT_CERTIFICATE_TRIALS,
    EquivalenceReport,
    certify_equivalence,
)
from lmsf.core_processes.reparameterization.reparameterizable_conv import fuse_reparameterizable
from lmsf.system.paths_and_filenames.file_and_folder_names import DEPLOY_FORM, TRAIN_FORM

logger = logging.getLogger(__name__)

BLOCK_CERTIFICATE_SPATIAL_SIZE = 8
END_TO_END_CERTIFICATE_TRIALS = 10
END_TO_END_CERTIFICATE_INPUT_SIZE = 64


def fuse_model(model: LmsfModel) -> LmsfModel:
    """
    Collapse every re-parameterizable conv into its fused single-path form.
    The returned deploy-form model holds fused layers only; the input model is left untouched.
    """
    if model.form == DEPLOY_FORM:
        logger.info("Model is already in deploy form, nothing to fuse")
        return model

    fused_model = fuse_reparameterizable(model).model_copy(update={"form": DEPLOY_FORM})
    logger.info(
        f"Fused model to {DEPLOY_FORM} form: {model.parameter_count:,} -> {fused_model.parameter_count:,} parameters"
    )
    return fused_model


def certify_model_fusion(
    train_model: LmsfModel,
    deploy_model: LmsfModel,
    block_trials: int = DEFAULT_CERTIFICATE_TRIALS,
    end_to_end_trials: int = END_TO_END_CERTIFICATE_TRIALS,
    end_to_end_input_size: int = END_TO_END_CERTIFICATE_INPUT_SIZE,
    seed: int = 0,
    use_tqdm: bool = False,
) -> List[EquivalenceReport]:
    """
    One certificate per C2f-Pro block on (1, C, 8, 8) inputs, then one for the whole model on
    (1, 3, S, S) images. The last report is always the whole-model one.
    """
    if train_model.form != TRAIN_FORM or deploy_model.form != DEPLOY_FORM:
        logger.warning(f"Certifying a {train_model.form}-form model against a {deploy_model.form}-form model")

    reports = []
    stage_pairs = zip(train_model.backbone.stages, deploy_model.backbone.stages)
    for stage_index, (train_stage, deploy_stage) in enumerate(stage_pairs):
        channels = train_stage.block.in_conv.in_channels
        reports.append(
            certify_equivalence(
                lambda x, block=train_stage.block: c2f_pro_forward(x, block, train_model.form),
                lambda x, block=deploy_stage.block: c2f_pro_forward(x, block, deploy_model.form),
                input_shape=(1, channels, BLOCK_CERTIFICATE_SPATIAL_SIZE, BLOCK_CERTIFICATE_SPATIAL_SIZE),
                trials=block_trials,
                seed=seed + stage_index,
                name=f"backbone.stages.{stage_index}.block",
                use_tqdm=use_tqdm,
            )
        )

    reports.append(
        certify_equivalence(
            lambda x: lmsf_forward(train_model, x),
            lambda x: lmsf_forward(deploy_model, x),
            input_shape=(1, 3, end_to_end_input_size, end_to_end_input_size),
            trials=end_to_end_trials,
            seed=seed,
            name="whole model",
            use_tqdm=use_tqdm,
        )
    )
    return reports
