import logging
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ValidationError

from lmsf.core_processes.backbone.backbone_forward import backbone_forward
from lmsf.core_processes.backbone.ema_attention import (
    EMA_CHANNEL_GATE_PROBE,
    EMA_SPATIAL_GATE_PROBE,
    ema_forward,
)
from lmsf.core_processes.head.edge_loss import binary_cross_entropy_with_logits, edge_map_from_labels
from lmsf.core_processes.head.extract_instances import instances_from_label_map
from lmsf.core_processes.head.lmsh import (
    LMSH_DEEP_MIX_PROBE,
    LMSH_FUSED_PROBE,
    LMSH_FUSION_GATE_PROBE,
    LMSH_U3_PROBE,
)
from lmsf.core_processes.model_assembly.build_model import build_model
from lmsf.core_processes.model_assembly.fuse_model import certify_model_fusion, fuse_model
from lmsf.core_processes.model_assembly.lmsf_forward import lmsf_forward
from lmsf.core_processes.model_assembly.lmsf_model import LmsfModel
from lmsf.core_processes.neck.gradient_consistency_loss import gradient_consistency_from_edge_map, image_at_p3_grid
from lmsf.core_processes.neck.ssff import SSFF_ALPHA_PROBE, SSFF_DIRECTION_GATE_PROBE, SSFF_EDGE_GATE_PROBE
from lmsf.core_processes.neck.tfe import TFE_CHANNEL_GATE_PROBE, TFE_SPATIAL_GATE_PROBE, tfe_forward
from lmsf.core_processes.reparameterization.certify_equivalence import EquivalenceReport
from lmsf.core_processes.tensor_core.activation_probe import ActivationProbe
from lmsf.core_processes.tensor_core.conv2d import conv2d
from lmsf.core_processes.tensor_core.group_norm import group_norm
from lmsf.core_processes.tensor_core.layer_models import ConvLayer, NormLayer
from lmsf.core_processes.tensor_core.mac_profiler import MacProfiler
from lmsf.core_processes.tensor_core.resample import mean_down_2, nearest_up_2
from lmsf.core_processes.tensor_core.sobel_gradient import sobel_gradient
from lmsf.data_layer.model_config.model_config import ModelConfig
from lmsf.data_layer.weight_store.weight_store import encode_weight_store, weight_store_from_model
from lmsf.diagnostics.selfcheck.reference_oracles import (
    flood_fill_components,
    naive_conv2d,
    naive_group_norm,
    naive_sobel,
)

logger = logging.getLogger(__name__)

ORACLE_SHAPE_COUNT = 50
ORACLE_TOLERANCE = 1e-5
PROBE_INPUT_SIZE = 64
PYRAMID_CHECK_SIZES = (64, 96, 160)
LABEL_MAP_TRIALS = 100
GATE_PROBES = (
    EMA_CHANNEL_GATE_PROBE,
    EMA_SPATIAL_GATE_PROBE,
    SSFF_ALPHA_PROBE,
    SSFF_DIRECTION_GATE_PROBE,
    SSFF_EDGE_GATE_PROBE,
    TFE_CHANNEL_GATE_PROBE,
    TFE_SPATIAL_GATE_PROBE,
    LMSH_FUSION_GATE_PROBE,
)


class SuiteResult(BaseModel):
    name: str
    passed: bool
    detail: str


class SelfcheckReport(BaseModel):
    suites: List[SuiteResult]

    @property
    def passed(self) -> bool:
        return all(suite.passed for suite in self.suites)

    def as_text(self) -> str:
        lines = [f"[{'PASS' if suite.passed else 'FAIL'}] {suite.name}: {suite.detail}" for suite in self.suites]
        lines.append(f"{sum(suite.passed for suite in self.suites)}/{len(self.suites)} suites passed")
        return "\n".join(lines)


def _random_conv_case(rng: np.random.Generator):
    groups = int(rng.choice([1, 2, 3]))
    in_channels = groups * int(rng.integers(1, 3))
    depthwise = bool(rng.integers(0, 2))
    if depthwise:
        groups = in_channels
        out_channels = in_channels
    else:
        out_channels = groups * int(rng.integers(1, 3))
    kernel = int(rng.choice([1, 2, 3]))
    stride = int(rng.integers(1, 3))
    dilation = int(rng.integers(1, 3))
    padding = int(rng.integers(0, 3))
    height = int(rng.integers(dilation * (kernel - 1) + 1, 8))
    width = int(rng.integers(dilation * (kernel - 1) + 1, 8))
    x = rng.standard_normal((int(rng.integers(1, 3)), in_channels, height, width)).astype(np.float32)
    layer = ConvLayer(
        weight=rng.standard_normal((out_channels, in_channels // groups, kernel, kernel)),
        bias=rng.standard_normal(out_channels) if rng.integers(0, 2) else None,
        stride=stride,
        padding=padding,
        dilation=dilation,
        groups=groups,
    )
    return x, layer


def check_conv_oracle(rng: np.random.Generator) -> str:
    worst = 0.0
    for _ in range(ORACLE_SHAPE_COUNT):
        x, layer = _random_conv_case(rng)
        with MacProfiler() as profiler:
            output = conv2d(x, layer)
        expected, multiplies = naive_conv2d(
            x, layer.weight, layer.bias, layer.stride, layer.padding, layer.dilation, layer.groups
        )
        worst = max(worst, float(np.abs(output - expected).max()))
        if profiler.total_macs != multiplies:
            raise AssertionError(f"profiler counted {profiler.total_macs} MACs, the loop oracle {multiplies}")
    if worst > ORACLE_TOLERANCE:
        raise AssertionError(f"max deviation {worst:.2e} exceeds {ORACLE_TOLERANCE}")
    return f"{ORACLE_SHAPE_COUNT} shapes, max deviation {worst:.2e}, MAC counts exact"


def check_group_norm_oracle(rng: np.random.Generator) -> str:
    worst = 0.0
    for _ in range(ORACLE_SHAPE_COUNT):
        num_groups = int(rng.integers(1, 4))
        channels = num_groups * int(rng.integers(1, 4))
        x = rng.standard_normal((int(rng.integers(1, 3)), channels, int(rng.integers(2, 6)), int(rng.integers(2, 6))))
        layer = NormLayer(
            num_groups=num_groups, gamma=rng.standard_normal(channels), beta=rng.standard_normal(channels)
        )
        x = x.astype(np.float32)
        expected = naive_group_norm(x, num_groups, layer.gamma, layer.beta, layer.eps)
        worst = max(worst, float(np.abs(group_norm(x, layer) - expected).max()))
    if worst > ORACLE_TOLERANCE:
        raise AssertionError(f"max deviation {worst:.2e} exceeds {ORACLE_TOLERANCE}")
    return f"{ORACLE_SHAPE_COUNT} shapes, max deviation {worst:.2e}"


def check_sobel_oracle(rng: np.random.Generator) -> str:
    worst = 0.0
    for _ in range(ORACLE_SHAPE_COUNT):
        shape = (int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.integers(1, 7)), int(rng.integers(1, 7)))
        x = rng.standard_normal(shape).astype(np.float32)
        worst = max(worst, float(np.abs(sobel_gradient(x) - naive_sobel(x)).max()))
    if worst > ORACLE_TOLERANCE:
        raise AssertionError(f"max deviation {worst:.2e} exceeds {ORACLE_TOLERANCE}")
    return f"{ORACLE_SHAPE_COUNT} shapes, max deviation {worst:.2e}"


def check_profiler_closed_form(rng: np.random.Generator) -> str:
    layer = ConvLayer(weight=np.zeros((32, 16, 1, 1)), bias=np.zeros(32))
    with MacProfiler(symbolic=True) as profiler:
        conv2d(np.zeros((1, 16, 80, 80), dtype=np.float32), layer)
    if layer.parameter_count != 544 or 2 * profiler.total_macs != 6_553_600:
        raise AssertionError(f"1x1 16->32 @ 80x80 gave {layer.parameter_count} params, {2 * profiler.total_macs} FLOPs")
    return "1x1 16->32 @ 80x80: 544 params, 6,553,600 FLOPs"


def check_resample_identity(rng: np.random.Generator) -> str:
    for _ in range(20):
        shape = (int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.integers(1, 9)), int(rng.integers(1, 9)))
        x = rng.standard_normal(shape).astype(np.float32)
        if not np.array_equal(mean_down_2(nearest_up_2(x)), x):
            raise AssertionError(f"meanDown2(nearestUp2(x)) != x for shape {shape}")
    return "meanDown2 . nearestUp2 is the identity on 20 random shapes"


def check_block_certificates(reports: List[EquivalenceReport]) -> Tuple[bool, str]:
    worst = max(report.max_abs_diff for report in reports)
    return all(report.passed for report in reports), f"{len(reports)} blocks, worst max |diff| {worst:.2e}"


def _probe_forward(model: LmsfModel, rng: np.random.Generator) -> ActivationProbe:
    image = rng.standard_normal((1, 3, PROBE_INPUT_SIZE, PROBE_INPUT_SIZE)).astype(np.float32)
    with ActivationProbe() as probe:
        lmsf_forward(model, image)
    return probe


def check_gate_ranges(model: LmsfModel, rng: np.random.Generator) -> str:
    probe = _probe_forward(model, rng)
    checked = 0
    for name in GATE_PROBES:
        for gate in probe.get(name):
            if not (np.all(gate > 0) and np.all(gate < 1)):
                raise AssertionError(f"{name} left (0, 1): range [{gate.min()}, {gate.max()}]")
            checked += 1
    return f"{checked} gate tensors strictly inside (0, 1)"


def check_ema_contractivity(model: LmsfModel, rng: np.random.Generator) -> str:
    checked = 0
    for stage in model.backbone.stages:
        for unit in stage.block.units:
            if unit.ema is None:
                continue
            y = (rng.standard_normal((1, unit.ema.channels, 6, 6)) * 10).astype(np.float32)
            if np.abs(ema_forward(y, unit.ema)).max() > np.abs(y).max():
                raise AssertionError("EMA output exceeded its input in max-norm")
            checked += 1
    return f"{checked} EMA modules contractive"


def check_tfe_bound(model: LmsfModel, rng: np.random.Generator) -> str:
    channels = model.config.fused_channels
    f3 = np.abs(rng.standard_normal((1, channels, 8, 8))).astype(np.float32)
    f4 = rng.standard_normal((1, channels, 4, 4)).astype(np.float32)
    f5 = rng.standard_normal((1, channels, 2, 2)).astype(np.float32)
    with ActivationProbe() as probe:
        refined = tfe_forward(f3, f4, f5, model.neck.tfe)
    channel_gate = probe.get(TFE_CHANNEL_GATE_PROBE)[0]
    spatial_gate = probe.get(TFE_SPATIAL_GATE_PROBE)[0]
    if not (np.all(refined >= f3) and np.all(refined <= 2 * f3)):
        raise AssertionError("refined map left the [F3, 2 F3] band on non-negative input")
    deviation = float(np.abs(refined - f3).max())
    bound = float(np.abs(f3).max() * channel_gate.max() * spatial_gate.max())
    if deviation > bound * (1 + 1e-6) or deviation >= float(np.abs(f3).max()):
        raise AssertionError(f"|F3~ - F3| = {deviation} exceeds the gate bound {bound}")
    return f"|F3~ - F3|_inf = {deviation:.4f} <= {bound:.4f}"


def check_lmsh_convexity(model: LmsfModel, rng: np.random.Generator) -> str:
    probe = _probe_forward(model, rng)
    u3 = probe.get(LMSH_U3_PROBE)[0]
    deep = probe.get(LMSH_DEEP_MIX_PROBE)[0]
    fused = probe.get(LMSH_FUSED_PROBE)[0]
    slack = 1e-5 * (1 + np.maximum(np.abs(u3), np.abs(deep)))
    lower, upper = np.minimum(u3, deep) - slack, np.maximum(u3, deep) + slack
    if not (np.all(fused >= lower) and np.all(fused <= upper)):
        raise AssertionError("fused head features left the interval between U3 and the deep mix")
    if not probe.get(LMSH_FUSION_GATE_PROBE):
        raise AssertionError("fusion gate was not captured")
    return f"{fused.size} elements inside [U3, deep mix]"


def check_pyramid_strides(model: LmsfModel) -> str:
    for size in PYRAMID_CHECK_SIZES:
        with MacProfiler(symbolic=True):
            pyramid = backbone_forward(np.zeros((1, 3, size, size), dtype=np.float32), model.backbone, model.form)
        expected = [(size // stride, size // stride) for stride in (8, 16, 32)]
        actual = [tuple(level.shape[2:]) for level in pyramid.levels]
        if actual != expected:
            raise AssertionError(f"input {size}: pyramid {actual}, expected {expected}")
        if list(pyramid.channel_counts) != list(model.config.pyramid_channels):
            raise AssertionError(f"pyramid channels {pyramid.channel_counts} != {model.config.pyramid_channels}")
    return f"strides 8/16/32 hold at inputs {PYRAMID_CHECK_SIZES}"


def check_loss_cases(rng: np.random.Generator) -> str:
    image = rng.random((1, 3, 32, 32)).astype(np.float32)
    reference = image_at_p3_grid(image)
    if gradient_consistency_from_edge_map(reference, image, 0.1) != 0.0:
        raise AssertionError("gradient-consistency loss is not zero at an exact match")
    if gradient_consistency_from_edge_map(rng.standard_normal(reference.shape), image, 0.0) != 0.0:
        raise AssertionError("gradient-consistency loss is not zero with lambda 0")
    flat_image = np.full((1, 3, 32, 32), 0.3, dtype=np.float32)
    if gradient_consistency_from_edge_map(np.full(reference.shape, 0.7, dtype=np.float32), flat_image, 0.1) != 0.0:
        raise AssertionError("gradient-consistency loss is not zero on flat fields")
    random_loss = gradient_consistency_from_edge_map(rng.standard_normal(reference.shape), image, 0.1)
    if random_loss < 0:
        raise AssertionError("gradient-consistency loss went negative")

    labels = rng.integers(0, 3, (8, 8))
    targets = edge_map_from_labels(labels)
    limit_logits = np.where(targets > 0, 1e4, -1e4)
    if binary_cross_entropy_with_logits(limit_logits, targets) > 1e-6:
        raise AssertionError("edge BCE does not vanish in the saturated limit")
    if binary_cross_entropy_with_logits(rng.standard_normal(targets.shape), targets) < 0:
        raise AssertionError("edge BCE went negative")
    return "zero-at-match, lambda = 0, flat-field and saturation cases hold"


def check_profiler_consistency(model: LmsfModel, rng: np.random.Generator) -> str:
    image = rng.standard_normal((1, 3, PROBE_INPUT_SIZE, PROBE_INPUT_SIZE)).astype(np.float32)
    with MacProfiler(symbolic=True) as symbolic:
        lmsf_forward(model, image)
    with MacProfiler(symbolic=False) as executed:
        lmsf_forward(model, image)
    if symbolic.total_macs != executed.total_macs:
        raise AssertionError(f"symbolic {symbolic.total_macs} MACs != executed {executed.total_macs} MACs")
    return f"symbolic and executed forward both count {2 * executed.total_macs:,} FLOPs"


def check_determinism(config: ModelConfig, seed: int, rng: np.random.Generator) -> str:
    first = build_model(config, seed=seed)
    second = build_model(config, seed=seed)
    if encode_weight_store(weight_store_from_model(first)) != encode_weight_store(weight_store_from_model(second)):
        raise AssertionError("two builds with the same seed serialized differently")
    image = rng.standard_normal((1, 3, PROBE_INPUT_SIZE, PROBE_INPUT_SIZE)).astype(np.float32)
    if not np.array_equal(lmsf_forward(first, image), lmsf_forward(first, image)):
        raise AssertionError("repeated forward passes disagree")
    return "identical weight bytes and logits across repeats"


def check_instance_extraction(rng: np.random.Generator) -> str:
    for _ in range(LABEL_MAP_TRIALS):
        label_map = rng.integers(0, 3, (int(rng.integers(1, 16)), int(rng.integers(1, 16)))).astype(np.uint8)
        min_area = int(rng.integers(1, 4))
        instance_set = instances_from_label_map(label_map, min_area)
        oracle = flood_fill_components(label_map, min_area)
        if len(instance_set) != len(oracle):
            raise AssertionError(f"{len(instance_set)} instances vs {len(oracle)} from flood fill")
        if sorted((i.class_id, i.area) for i in instance_set.instances) != sorted(oracle):
            raise AssertionError("instance (class, area) multiset differs from flood fill")
        coverage = np.zeros(label_map.shape, dtype=np.int64)
        for instance in instance_set.instances:
            coverage += instance.mask
        if coverage.max(initial=0) > 1:
            raise AssertionError("instance masks overlap")
        if min_area == 1 and not np.array_equal(coverage > 0, label_map > 0):
            raise AssertionError("instances do not cover the foreground exactly")
    return f"{LABEL_MAP_TRIALS} random label maps agree with flood fill"


def check_config_rejection(config: ModelConfig) -> str:
    for changes in ({"stage_widths": []}, {"input_size": 630}):
        try:
            ModelConfig(**{**config.model_dump(), **changes})
        except ValidationError:
            continue
        raise AssertionError(f"config with {changes} was accepted")
    return "empty stage list and input_size 630 are rejected"


def perturb_fused_weights(deploy_model: LmsfModel, magnitude: float = 1e-2) -> None:
    """Test hook: nudge one fused token-mixer kernel so the first block's certificate must fail."""
    fused = deploy_model.backbone.stages[0].block.units[0].token_mixer.fused
    fused.weight = fused.weight + np.float32(magnitude)


def _run_suite(name: str, check: Callable[[], object]) -> SuiteResult:
    try:
        outcome = check()
    except Exception as e:
        logger.error(f"Selfcheck suite '{name}' failed: {e}")
        return SuiteResult(name=name, passed=False, detail=str(e))
    passed, detail = outcome if isinstance(outcome, tuple) else (True, outcome)
    if passed:
        logger.success(f"Selfcheck suite '{name}' passed: {detail}")
    else:
        logger.error(f"Selfcheck suite '{name}' failed: {detail}")
    return SuiteResult(name=name, passed=passed, detail=detail)


def run_selfcheck(
    config: Optional[ModelConfig] = None,
    seed: int = 0,
    certificate_trials: int = 100,
    perturb_after_fusion: bool = False,
    use_tqdm: bool = False,
) -> SelfcheckReport:
    """Build a model from `config` and run the whole invariant battery against it."""
    config = config or ModelConfig()
    rng = np.random.default_rng(seed)
    logger.info(f"Running selfcheck (seed={seed}, {certificate_trials} certificate trials)")

    train_model = build_model(config, seed=seed)
    deploy_model = fuse_model(train_model)
    if perturb_after_fusion:
        logger.warning("Perturbing fused weights before certification")
        perturb_fused_weights(deploy_model)
    certificates = certify_model_fusion(
        train_model, deploy_model, block_trials=certificate_trials, seed=seed, use_tqdm=use_tqdm
    )

    suites = [
        ("conv2d oracle", lambda: check_conv_oracle(rng)),
        ("groupNorm oracle", lambda: check_group_norm_oracle(rng)),
        ("sobel oracle", lambda: check_sobel_oracle(rng)),
        ("profiler closed form", lambda: check_profiler_closed_form(rng)),
        ("resample identity", lambda: check_resample_identity(rng)),
        ("fusion certificates", lambda: check_block_certificates(certificates[:-1])),
        ("end-to-end equivalence", lambda: (certificates[-1].passed, certificates[-1].summary())),
        ("gate ranges", lambda: check_gate_ranges(deploy_model, rng)),
        ("EMA contractivity", lambda: check_ema_contractivity(deploy_model, rng)),
        ("TFE residual bound", lambda: check_tfe_bound(deploy_model, rng)),
        ("LMSH gate convexity", lambda: check_lmsh_convexity(deploy_model, rng)),
        ("pyramid strides", lambda: check_pyramid_strides(deploy_model)),
        ("loss cases", lambda: check_loss_cases(rng)),
        ("profiler consistency", lambda: check_profiler_consistency(deploy_model, rng)),
        ("determinism", lambda: check_determinism(config, seed, rng)),
        ("instance extraction", lambda: check_instance_extraction(rng)),
        ("config rejection", lambda: check_config_rejection(config)),
    ]
    report = SelfcheckReport(suites=[_run_suite(name, check) for name, check in suites])
    logger.info(f"Selfcheck finished: {'all suites passed' if report.passed else 'FAILURES present'}")
    return report
