import logging
from typing import Any, Dict, List

import numpy as np
from pydantic import BaseModel

from lmsf.core_processes.model_assembly.build_model import build_model
from lmsf.core_processes.model_assembly.fuse_model import fuse_model
from lmsf.core_processes.model_assembly.lmsf_forward import lmsf_forward
from lmsf.core_processes.model_assembly.lmsf_model import LmsfModel
from lmsf.core_processes.model_assembly.model_tree import count_parameters
from lmsf.core_processes.tensor_core.mac_profiler import MacProfiler
from lmsf.data_layer.model_config.model_config import ModelConfig

logger = logging.getLogger(__name__)

FLOP_CONVENTION = "FLOPs = 2 x MACs"
FLOPS_PER_MAC = 2


class ModuleProfile(BaseModel):
    name: str
    parameter_count: int
    flop_count: int


class ProfileReport(BaseModel):
    input_size: int
    form: str
    modules: List[ModuleProfile]
    total_parameter_count: int
    total_flop_count: int
    flop_convention: str = FLOP_CONVENTION

    def as_text(self) -> str:
        lines = [f"profile @ {self.input_size}x{self.input_size}, {self.form} form ({self.flop_convention})"]
        lines.append(f"{'module':<20}{'params':>14}{'GFLOPs':>12}")
        for module in self.modules:
            lines.append(f"{module.name:<20}{module.parameter_count:>14,}{module.flop_count / 1e9:>12.4f}")
        lines.append(f"{'total':<20}{self.total_parameter_count:>14,}{self.total_flop_count / 1e9:>12.4f}")
        return "\n".join(lines)


def report_modules(model: LmsfModel) -> Dict[str, Any]:
    """Profiler scope name -> parameter subtree, in report order."""
    modules = {"backbone.stem": model.backbone.stem}
    for stage_index, stage in enumerate(model.backbone.stages):
        modules[f"backbone.stages.{stage_index}"] = stage
    modules["backbone.lmfe"] = model.backbone.lmfe
    modules["neck.ssff"] = model.neck.ssff
    modules["neck.tfe"] = model.neck.tfe
    modules["head"] = model.head
    return modules


def profile_model(model: LmsfModel) -> ProfileReport:
    """
    Parameter counts come from each layer's closed form; FLOPs from the MACs recorded during a symbolic
    forward (no arithmetic) of one image at the configured input size with full-resolution logits.
    """
    input_size = model.config.input_size
    image = np.zeros((1, 3, input_size, input_size), dtype=np.float32)
    with MacProfiler(symbolic=True) as profiler:
        lmsf_forward(model, image, out_stride=1)

    modules = [
        ModuleProfile(
            name=name,
            parameter_count=count_parameters(subtree),
            flop_count=FLOPS_PER_MAC * profiler.macs_under(name),
        )
        for name, subtree in report_modules(model).items()
    ]
    report = ProfileReport(
        input_size=input_size,
        form=model.form,
        modules=modules,
        total_parameter_count=sum(module.parameter_count for module in modules),
        total_flop_count=sum(module.flop_count for module in modules),
    )
    unattributed_macs = profiler.total_macs - report.total_flop_count // FLOPS_PER_MAC
    if unattributed_macs != 0:
        logger.warning(f"{unattributed_macs} MACs were recorded outside the report modules")
    logger.info(
        f"Profiled {model.form}-form model: {report.total_parameter_count / 1e6:.3f}M parameters, "
        f"{report.total_flop_count / 1e9:.3f} GFLOPs at {input_size}x{input_size}"
    )
    return report


class AblationRow(BaseModel):
    name: str
    parameter_count: int
    flop_count: int
    parameter_delta: int
    flop_delta: int


def ablation_variants(config: ModelConfig) -> Dict[str, ModelConfig]:
    def variant(**changes) -> ModelConfig:
        return ModelConfig(**{**config.model_dump(), **changes})

    return {
        "default": config,
        "ema at strides 8/16/32": variant(ema_strides=[8, 16, 32]),
        "no ema": variant(ema_strides=[]),
        "edge gate at p3": variant(edge_gate_p3=not config.edge_gate_p3),
        "untied head": variant(share_head_weights=not config.share_head_weights),
        "mean-pool down (no blur)": variant(blur_before_down=not config.blur_before_down),
    }


def profile_ablation(config: ModelConfig, seed: int = 0) -> List[AblationRow]:
    """
    Complexity of each architectural switch, as deltas against the deploy-form default.
    The train-form default is included to show what fusion removes.
    """
    profiles = {}
    for name, variant_config in ablation_variants(config).items():
        train_model = build_model(variant_config, seed=seed)
        profiles[name] = profile_model(fuse_model(train_model))
        if name == "default":
            profiles["default (train form)"] = profile_model(train_model)

    baseline = profiles["default"]
    return [
        AblationRow(
            name=name,
            parameter_count=report.total_parameter_count,
            flop_count=report.total_flop_count,
            parameter_delta=report.total_parameter_count - baseline.total_parameter_count,
            flop_delta=report.total_flop_count - baseline.total_flop_count,
        )
        for name, report in profiles.items()
    ]


def deploy_profile(config: ModelConfig, seed: int = 0) -> ProfileReport:
    return profile_model(fuse_model(build_model(config, seed=seed)))
