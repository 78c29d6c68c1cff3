import argparse
import logging
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from lmsf.core_processes.model_assembly.build_model import build_model
from lmsf.core_processes.model_assembly.fuse_model import certify_model_fusion, fuse_model
from lmsf.core_processes.model_assembly.lmsf_model import LmsfModel
from lmsf.core_processes.process_image.infer_image import infer_image
from lmsf.data_layer.model_config.model_config import load_model_config
from lmsf.data_layer.weight_store.weight_store import load_model, save_model
from lmsf.diagnostics.benchmark_latency import MINIMUM_BENCHMARK_RUNS, benchmark_latency
from lmsf.diagnostics.generate_profile_report import generate_profile_html_report
from lmsf.diagnostics.profile_model import profile_ablation, profile_model
from lmsf.diagnostics.selfcheck.run_selfcheck import run_selfcheck
from lmsf.system.logging.configure_logging import LogLevel, set_log_level
from lmsf.system.paths_and_filenames.file_and_folder_names import DEPLOY_FORM, TRAIN_FORM
from lmsf.utilities.lmsf_exceptions import (
    ContractViolationException,
    ImageFormatException,
    WeightFileException,
)
from lmsf.utilities.save_to_json import save_to_json

logger = logging.getLogger(__name__)

HANDLED_EXCEPTIONS = (
    ContractViolationException,
    WeightFileException,
    ImageFormatException,
    ValidationError,
    FileNotFoundError,
)


def get_model(args: argparse.Namespace) -> LmsfModel:
    """
    Load `--weights` if given, otherwise build a seeded model from `--config` (or the shipped default),
    then bring it to `--form`.
    """
    if getattr(args, "weights", None):
        model = load_model(args.weights)
    else:
        model = build_model(load_model_config(args.config), seed=args.seed)

    requested_form = getattr(args, "form", None)
    if requested_form == DEPLOY_FORM:
        return fuse_model(model)
    if requested_form == TRAIN_FORM and model.form != TRAIN_FORM:
        raise ContractViolationException("a deploy-form weight file cannot be expanded back into train form")
    return model


def write_report_json(report, output_path: Optional[str]):
    if output_path:
        output_path = Path(output_path)
        save_to_json(output_path.parent, report.model_dump(mode="json"), output_path.name)


def run_init(args: argparse.Namespace) -> int:
    model = build_model(load_model_config(args.config), seed=args.seed)
    if args.form == DEPLOY_FORM:
        model = fuse_model(model)
    save_model(model, args.output)
    print(f"wrote {model.form}-form weights ({model.parameter_count:,} parameters) to {args.output}")
    return 0


def run_profile(args: argparse.Namespace) -> int:
    model = get_model(args)
    report = profile_model(model)
    print(report.as_text())
    write_report_json(report, args.output)

    ablation_rows = None
    if args.ablation:
        ablation_rows = profile_ablation(model.config, seed=args.seed)
        print(f"\n{'ablation':<28}{'params':>14}{'Δ params':>12}{'GFLOPs':>10}{'Δ MFLOPs':>12}")
        for row in ablation_rows:
            print(
                f"{row.name:<28}{row.parameter_count:>14,}{row.parameter_delta:>12,}"
                f"{row.flop_count / 1e9:>10.3f}{row.flop_delta / 1e6:>12.1f}"
            )
    if args.html:
        generate_profile_html_report(report, args.html, ablation_rows=ablation_rows)
    return 0


def run_fuse(args: argparse.Namespace) -> int:
    train_model = load_model(args.weights)
    if train_model.form != TRAIN_FORM:
        raise ContractViolationException(f"{args.weights} already holds {train_model.form}-form weights")
    deploy_model = fuse_model(train_model)
    reports = certify_model_fusion(train_model, deploy_model, block_trials=args.trials, seed=args.seed, use_tqdm=True)
    for report in reports:
        print(report.summary())
    if not all(report.passed for report in reports):
        logger.error("Fused model failed its equivalence certificate, not writing deploy weights")
        return 1
    save_model(deploy_model, args.output)
    print(f"wrote deploy-form weights ({deploy_model.parameter_count:,} parameters) to {args.output}")
    return 0


def run_infer(args: argparse.Namespace) -> int:
    model = load_model(args.weights)
    instance_set = infer_image(model, args.image, args.out_mask, args.out_json)
    print(f"{len(instance_set)} instances, mask -> {args.out_mask}, instances -> {args.out_json}")
    return 0


def run_bench(args: argparse.Namespace) -> int:
    model = get_model(args)
    report = benchmark_latency(model, runs=args.runs, seed=args.seed)
    print(report.as_text())
    write_report_json(report, args.output)
    return 0


def run_selfcheck_command(args: argparse.Namespace) -> int:
    config = load_model_config(args.config)
    report = run_selfcheck(
        config,
        seed=args.seed,
        certificate_trials=args.trials,
        perturb_after_fusion=args.perturb_after_fusion,
    )
    print(report.as_text())
    write_report_json(report, args.output)
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lmsf", description="LMSF-A segmentation engine: inference, fusion and profiling"
    )
    parser.add_argument(
        "--log-level", choices=[level.name for level in LogLevel], default=LogLevel.INFO.name, help="console log level"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add_config(subparser):
        subparser.add_argument("--config", type=str, help="path to a model config TOML file", required=False)
        subparser.add_argument("--seed", type=int, default=0, help="weight initialization / input seed")

    init_parser = subparsers.add_parser("init", help="write a freshly initialized weight file")
    add_config(init_parser)
    init_parser.add_argument("--form", choices=[TRAIN_FORM, DEPLOY_FORM], default=TRAIN_FORM)
    init_parser.add_argument("--output", type=str, help="weight file to write", required=True)
    init_parser.set_defaults(handler=run_init)

    profile_parser = subparsers.add_parser("profile", help="report parameters and FLOPs per module")
    add_config(profile_parser)
    profile_parser.add_argument("--weights", type=str, help="path to a weight file", required=False)
    profile_parser.add_argument("--form", choices=[TRAIN_FORM, DEPLOY_FORM], default=DEPLOY_FORM)
    profile_parser.add_argument("--output", type=str, help="write the report as json", required=False)
    profile_parser.add_argument("--html", type=str, help="write a plotly html report", required=False)
    profile_parser.add_argument("--ablation", action="store_true", help="also profile the architecture switches")
    profile_parser.set_defaults(handler=run_profile)

    fuse_parser = subparsers.add_parser("fuse", help="fuse a train-form weight file into deploy form")
    fuse_parser.add_argument("--weights", type=str, help="train-form weight file", required=True)
    fuse_parser.add_argument("--output", type=str, help="deploy-form weight file to write", required=True)
    fuse_parser.add_argument("--trials", type=int, default=100, help="random inputs per block certificate")
    fuse_parser.add_argument("--seed", type=int, default=0, help="certificate input seed")
    fuse_parser.set_defaults(handler=run_fuse)

    infer_parser = subparsers.add_parser("infer", help="segment one P6 image")
    infer_parser.add_argument("--weights", type=str, help="path to a weight file", required=True)
    infer_parser.add_argument("--image", type=str, help="input P6 pixmap", required=True)
    infer_parser.add_argument("--out-mask", dest="out_mask", type=str, help="output P5 class map", required=True)
    infer_parser.add_argument("--out-json", dest="out_json", type=str, help="output instance list", required=True)
    infer_parser.set_defaults(handler=run_infer)

    bench_parser = subparsers.add_parser("bench", help="batch-1 latency benchmark")
    add_config(bench_parser)
    bench_parser.add_argument("--weights", type=str, help="path to a weight file", required=False)
    bench_parser.add_argument("--form", choices=[TRAIN_FORM, DEPLOY_FORM], default=DEPLOY_FORM)
    bench_parser.add_argument("--runs", type=int, default=50, help=f"timed runs (at least {MINIMUM_BENCHMARK_RUNS})")
    bench_parser.add_argument("--output", type=str, help="write the report as json", required=False)
    bench_parser.set_defaults(handler=run_bench)

    selfcheck_parser = subparsers.add_parser("selfcheck", help="run the invariant battery")
    add_config(selfcheck_parser)
    selfcheck_parser.add_argument("--trials", type=int, default=100, help="random inputs per block certificate")
    selfcheck_parser.add_argument("--output", type=str, help="write the report as json", required=False)
    selfcheck_parser.add_argument("--perturb-after-fusion", action="store_true", help=argparse.SUPPRESS)
    selfcheck_parser.set_defaults(handler=run_selfcheck_command)

    return parser


def lmsf_cli_main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    set_log_level(LogLevel[args.log_level])
    try:
        return args.handler(args)
    except HANDLED_EXCEPTIONS as e:
        logger.error(f"lmsf {args.command} failed: {e}")
        return 2
