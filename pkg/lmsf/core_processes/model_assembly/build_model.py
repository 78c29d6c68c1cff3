import logging
import math

import numpy as np

from lmsf.core_processes.backbone.backbone_forward import BackboneParams, BackboneStage, DownsampleLayer
from lmsf.core_processes.backbone.c2f_pro_block import C2fProBlock
from lmsf.core_processes.backbone.ema_attention import EmaParams
from lmsf.core_processes.backbone.lmfe_align import ConvGroupNormLayer
from lmsf.core_processes.backbone.rvb_ema_unit import RvbEmaUnit
from lmsf.core_processes.head.lmsh import LmshParams, SeparableResidualBlock
from lmsf.core_processes.model_assembly.lmsf_model import LmsfModel, NeckParams
from lmsf.core_processes.neck.ssff import DIRECTION_GATE_COUNT, SsffParams
from lmsf.core_processes.neck.tfe import TfeParams
from lmsf.core_processes.reparameterization.branch_spec import AffineNorm, BranchSpec, ConvBranch
from lmsf.core_processes.reparameterization.reparameterizable_conv import RepConv
from lmsf.core_processes.tensor_core.layer_models import ConvLayer, LinearLayer, NormLayer
from lmsf.data_layer.model_config.model_config import UNITS_PER_C2F_PRO_BLOCK, ModelConfig
from lmsf.system.paths_and_filenames.file_and_folder_names import TRAIN_FORM

logger = logging.getLogger(__name__)

IMAGE_CHANNELS = 3
TOKEN_MIXER_KERNEL = 3
HEAD_SCALE_COUNT = 3


class ParameterInitializer:
    """
    Seeded He-uniform initialization. Weights ~ U(+-sqrt(6 / fan_in)), biases ~ U(+-1 / sqrt(fan_in)).
    GroupNorm starts at gamma = 1, beta = 0; frozen affine norms get random statistics near identity
    so that folding them is a non-trivial rewrite.
    """

    def __init__(self, seed: int, norm_eps: float = 1e-5, gn_groups: int = 1):
        self.random_number_generator = np.random.default_rng(seed)
        self.norm_eps = norm_eps
        self.gn_groups = gn_groups

    def _uniform(self, bound: float, shape) -> np.ndarray:
        return self.random_number_generator.uniform(-bound, bound, size=shape).astype(np.float32)

    def conv(
        self,
        out_channels: int,
        in_channels: int,
        kernel_size: int = 1,
        stride: int = 1,
        groups: int = 1,
        bias: bool = True,
    ) -> ConvLayer:
        fan_in = (in_channels // groups) * kernel_size * kernel_size
        weight = self._uniform(math.sqrt(6.0 / fan_in), (out_channels, in_channels // groups, kernel_size, kernel_size))
        return ConvLayer(
            weight=weight,
            bias=self._uniform(1.0 / math.sqrt(fan_in), (out_channels,)) if bias else None,
            stride=stride,
            padding=kernel_size // 2,
            groups=groups,
        )

    def depthwise(self, channels: int, kernel_size: int, stride: int = 1, bias: bool = True) -> ConvLayer:
        return self.conv(channels, channels, kernel_size, stride=stride, groups=channels, bias=bias)

    def linear(self, out_features: int, in_features: int) -> LinearLayer:
        return LinearLayer(
            weight=self._uniform(math.sqrt(6.0 / in_features), (out_features, in_features)),
            bias=self._uniform(1.0 / math.sqrt(in_features), (out_features,)),
        )

    def group_norm(self, channels: int) -> NormLayer:
        return NormLayer.identity(channels, self.gn_groups, eps=self.norm_eps)

    def affine_norm(self, channels: int) -> AffineNorm:
        rng = self.random_number_generator
        return AffineNorm(
            running_mean=rng.uniform(-0.1, 0.1, channels),
            running_var=rng.uniform(0.8, 1.2, channels),
            gamma=rng.uniform(0.8, 1.2, channels),
            beta=rng.uniform(-0.1, 0.1, channels),
            eps=self.norm_eps,
        )

    def conv_group_norm(self, out_channels: int, in_channels: int, kernel_size: int = 1, stride: int = 1):
        return ConvGroupNormLayer(
            conv=self.conv(out_channels, in_channels, kernel_size, stride=stride, bias=False),
            norm=self.group_norm(out_channels),
        )


def build_token_mixer(init: ParameterInitializer, channels: int) -> RepConv:
    branches = [
        ConvBranch(conv=init.depthwise(channels, TOKEN_MIXER_KERNEL, bias=False), norm=init.affine_norm(channels)),
        ConvBranch(conv=init.depthwise(channels, 1, bias=False), norm=init.affine_norm(channels)),
        ConvBranch(conv=None, norm=init.affine_norm(channels)),
    ]
    return RepConv(branches=BranchSpec(branches=branches, in_channels=channels, out_channels=channels))


def build_pointwise_repconv(init: ParameterInitializer, out_channels: int, in_channels: int) -> RepConv:
    branches = [
        ConvBranch(conv=init.conv(out_channels, in_channels, 1, bias=False), norm=init.affine_norm(out_channels))
    ]
    if in_channels == out_channels:
        branches.append(ConvBranch(conv=None, norm=init.affine_norm(out_channels)))
    return RepConv(branches=BranchSpec(branches=branches, in_channels=in_channels, out_channels=out_channels))


def build_ema_params(init: ParameterInitializer, channels: int, reduction: int, spatial_kernel: int) -> EmaParams:
    hidden = channels // reduction
    return EmaParams(
        squeeze=init.linear(hidden, channels),
        excite=init.linear(channels, hidden),
        spatial=init.depthwise(channels, spatial_kernel),
    )


def build_rvb_ema_unit(init: ParameterInitializer, channels: int, config: ModelConfig, ema_enabled: bool) -> RvbEmaUnit:
    return RvbEmaUnit(
        ema=build_ema_params(init, channels, config.ema_reduction, config.ema_spatial_kernel) if ema_enabled else None,
        token_mixer=build_token_mixer(init, channels),
        token_norm=init.group_norm(channels),
        channel_expand=build_pointwise_repconv(init, 2 * channels, channels),
        channel_project=build_pointwise_repconv(init, channels, 2 * channels),
    )


def build_c2f_pro_block(
    init: ParameterInitializer, channels: int, config: ModelConfig, ema_enabled: bool
) -> C2fProBlock:
    half = channels // 2
    return C2fProBlock(
        in_conv=init.conv(channels, channels, 1),
        units=[build_rvb_ema_unit(init, half, config, ema_enabled) for _ in range(UNITS_PER_C2F_PRO_BLOCK)],
        out_conv=init.conv(channels, 2 * channels, 1),
    )


def build_backbone(init: ParameterInitializer, config: ModelConfig) -> BackboneParams:
    stem_width = config.scaled_stem_width
    stem = init.conv_group_norm(stem_width, IMAGE_CHANNELS, kernel_size=3, stride=2)

    stages = []
    in_channels = stem_width
    for stage_index, width in enumerate(config.scaled_stage_widths):
        downsample = DownsampleLayer(
            depthwise=init.depthwise(in_channels, 3, stride=2, bias=False),
            pointwise=init.conv_group_norm(width, in_channels),
        )
        block = build_c2f_pro_block(init, width, config, config.ema_enabled_at_stage(stage_index))
        stages.append(BackboneStage(downsample=downsample, block=block))
        in_channels = width

    lmfe = [init.conv_group_norm(config.fused_channels, width) for width in config.pyramid_channels]
    return BackboneParams(stem=stem, stages=stages, lmfe=lmfe)


def build_ssff(init: ParameterInitializer, config: ModelConfig) -> SsffParams:
    channels = config.fused_channels
    token_dim = 2 * channels
    return SsffParams(
        smp_projection=init.conv(channels, channels, 1),
        mixer_hidden=init.linear(token_dim, 3 * token_dim),
        mixer_output=init.linear(3 * channels + DIRECTION_GATE_COUNT, token_dim),
        self_convs=[init.conv(channels, channels, 1) for _ in range(3)],
        top_down_convs=[init.conv(channels, channels, 1) for _ in range(2)],
        bottom_up_convs=[init.conv(channels, channels, 1) for _ in range(2)],
        edge_gate=init.conv(1, channels, 1) if config.edge_gate_p3 else None,
        blur_before_down=config.blur_before_down,
    )


def build_tfe(init: ParameterInitializer, config: ModelConfig) -> TfeParams:
    channels = config.fused_channels
    hidden = channels // config.tfe_reduction
    return TfeParams(
        prior_conv=init.conv(channels, 2 * channels, 1),
        channel_squeeze=init.linear(hidden, channels),
        channel_excite=init.linear(channels, hidden),
        dw3=init.depthwise(channels, 3),
        dw5=init.depthwise(channels, 5),
        edge_projection=init.conv(1, channels, 1),
    )


def build_head(init: ParameterInitializer, config: ModelConfig) -> LmshParams:
    fused, head, classes = config.fused_channels, config.head_channels, config.num_classes
    weight_sets = 1 if config.share_head_weights else HEAD_SCALE_COUNT
    projections = []
    blocks = []
    for _ in range(weight_sets):
        projections.append(init.conv(head, fused, 1))
        blocks.append(
            [
                SeparableResidualBlock(
                    depthwise=init.depthwise(head, 3),
                    norm=init.group_norm(head),
                    pointwise=init.conv(head, head, 1),
                )
                for _ in range(config.shared_block_count)
            ]
        )
    return LmshParams(
        projections=projections,
        blocks=blocks,
        align_convs=[init.conv(head, head, 1) for _ in range(2)],
        gate_conv=init.conv(head, 3 * head, 1),
        deep_mix=init.conv(head, 2 * head, 1),
        cls8=init.conv(classes, head, 1),
        cls4_depthwise=init.depthwise(classes, 3),
        cls4_pointwise=init.conv(classes, classes, 1),
        cls1=init.conv(classes, classes, 1),
        edge_head=init.conv(1, head, 1),
    )


def build_model(config: ModelConfig, seed: int = 0) -> LmsfModel:
    """
    Build a train-form model with deterministic weights: the same (config, seed) always gives
    bitwise-identical arrays.
    """
    init = ParameterInitializer(seed=seed, norm_eps=config.norm_eps, gn_groups=config.gn_groups)
    model = LmsfModel(
        config=config,
        form=TRAIN_FORM,
        backbone=build_backbone(init, config),
        neck=NeckParams(ssff=build_ssff(init, config), tfe=build_tfe(init, config)),
        head=build_head(init, config),
    )
    logger.info(
        f"Built {TRAIN_FORM}-form model (seed={seed}, input {config.input_size}x{config.input_size}): "
        f"{model.parameter_count:,} parameters"
    )
    return model
