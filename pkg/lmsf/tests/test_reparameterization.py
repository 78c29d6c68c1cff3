import numpy as np
import pytest

from lmsf.core_processes.model_assembly.build_model import (
    ParameterInitializer,
    build_pointwise_repconv,
    build_token_mixer,
)
from lmsf.core_processes.reparameterization.branch_spec import AffineNorm, BranchSpec, ConvBranch
from lmsf.core_processes.reparameterization.certify_equivalence import certify_equivalence
from lmsf.core_processes.reparameterization.fuse_branches import fuse_branches, identity_kernel
from lmsf.core_processes.reparameterization.fuse_conv_norm import fuse_conv_norm
from lmsf.core_processes.reparameterization.reparameterizable_conv import RepConv, fuse_reparameterizable
from lmsf.core_processes.tensor_core.conv2d import conv2d
from lmsf.core_processes.tensor_core.layer_models import ConvLayer
from lmsf.system.paths_and_filenames.file_and_folder_names import DEPLOY_FORM, TRAIN_FORM
from lmsf.utilities.lmsf_exceptions import ContractViolationException


def random_norm(rng: np.random.Generator, channels: int) -> AffineNorm:
    return AffineNorm(
        running_mean=rng.uniform(-0.5, 0.5, channels),
        running_var=rng.uniform(0.5, 1.5, channels),
        gamma=rng.uniform(0.5, 1.5, channels),
        beta=rng.uniform(-0.5, 0.5, channels),
        eps=1e-5,
    )


def test_fuse_conv_norm_with_identity_statistics_is_a_no_op():
    conv = ConvLayer(weight=np.arange(9, dtype=np.float32).reshape(1, 1, 3, 3), bias=np.array([0.5]), padding=1)
    fused = fuse_conv_norm(conv, AffineNorm.identity(1))
    np.testing.assert_array_equal(fused.weight, conv.weight)
    np.testing.assert_array_equal(fused.bias, conv.bias)


def test_fuse_conv_norm_matches_conv_then_norm(random_number_generator):
    rng = random_number_generator
    conv = ConvLayer(weight=rng.standard_normal((6, 3, 3, 3)), padding=1, stride=2)
    norm = random_norm(rng, 6)
    fused = fuse_conv_norm(conv, norm)
    x = rng.standard_normal((2, 3, 9, 9)).astype(np.float32)
    np.testing.assert_allclose(conv2d(x, fused), norm.apply(conv2d(x, conv)), atol=1e-4)
    assert (fused.stride, fused.padding, fused.groups) == (2, 1, 1)


def test_fuse_conv_norm_rejects_non_positive_variance():
    conv = ConvLayer(weight=np.ones((2, 1, 1, 1)))
    norm = AffineNorm(
        running_mean=np.zeros(2), running_var=np.array([1.0, 0.0]), gamma=np.ones(2), beta=np.zeros(2), eps=0.0
    )
    with pytest.raises(ContractViolationException):
        fuse_conv_norm(conv, norm)
    with pytest.raises(ContractViolationException):
        fuse_conv_norm(conv, AffineNorm.identity(2).model_copy(update={"eps": -1e-3}))


def test_zero_eps_is_accepted_when_variance_is_positive():
    conv = ConvLayer(weight=np.ones((2, 1, 1, 1)))
    fused = fuse_conv_norm(conv, AffineNorm.identity(2, eps=0.0))
    np.testing.assert_array_equal(fused.weight, conv.weight)


def test_identity_kernel_copies_each_channel():
    x = np.random.default_rng(3).standard_normal((1, 4, 5, 5)).astype(np.float32)
    for groups in (1, 4):
        layer = ConvLayer(weight=identity_kernel(4, groups, 3), padding=1, groups=groups)
        np.testing.assert_array_equal(conv2d(x, layer), x)


def test_token_mixer_fuses_to_one_depthwise_conv(random_number_generator):
    init = ParameterInitializer(seed=5)
    mixer = build_token_mixer(init, 8)
    fused = fuse_branches(mixer.branches)
    assert fused.kernel_size == (3, 3) and fused.is_depthwise and fused.bias is not None
    x = random_number_generator.standard_normal((1, 8, 10, 10)).astype(np.float32)
    np.testing.assert_allclose(conv2d(x, fused), mixer.branches.forward(x), atol=1e-5)


def test_pure_identity_spec_fuses_to_delta():
    spec = BranchSpec(branches=[ConvBranch(conv=None, norm=None)], in_channels=3, out_channels=3)
    fused = fuse_branches(spec)
    x = np.random.default_rng(0).standard_normal((1, 3, 4, 4)).astype(np.float32)
    np.testing.assert_array_equal(conv2d(x, fused), x)


def test_fusion_never_increases_parameters():
    init = ParameterInitializer(seed=1)
    for channels in (4, 16, 32):
        mixer = build_token_mixer(init, channels)
        assert mixer.fuse().parameter_count <= mixer.parameter_count


def test_fusion_strictly_reduces_parameters_of_multi_branch_specs():
    init = ParameterInitializer(seed=7)
    for channels in (4, 16, 32):
        for repconv in (build_token_mixer(init, channels), build_pointwise_repconv(init, channels, channels)):
            assert len(repconv.branches.branches) > 1
            assert repconv.fuse().parameter_count < repconv.parameter_count


def test_fusing_a_fused_single_branch_spec_returns_an_equal_layer():
    fused = build_token_mixer(ParameterInitializer(seed=8), 6).fuse().fused
    refused = fuse_branches(BranchSpec(branches=[ConvBranch(conv=fused)], in_channels=6, out_channels=6))
    np.testing.assert_array_equal(refused.weight, fused.weight)
    np.testing.assert_array_equal(refused.bias, fused.bias)
    assert (refused.stride, refused.padding, refused.dilation, refused.groups) == (
        fused.stride,
        fused.padding,
        fused.dilation,
        fused.groups,
    )


def test_zero_depthwise_branch_plus_identity_fuses_to_delta():
    zero_depthwise = ConvLayer(weight=np.zeros((5, 1, 3, 3)), padding=1, groups=5)
    spec = BranchSpec(branches=[ConvBranch(conv=zero_depthwise), ConvBranch(conv=None)], in_channels=5, out_channels=5)
    fused = fuse_branches(spec)
    np.testing.assert_array_equal(fused.weight, identity_kernel(5, 5, 3))
    np.testing.assert_array_equal(fused.bias, np.zeros(5, dtype=np.float32))
    x = np.random.default_rng(9).standard_normal((1, 5, 6, 6)).astype(np.float32)
    np.testing.assert_array_equal(conv2d(x, fused), x)


def test_mixed_strides_are_rejected():
    spec = BranchSpec(
        branches=[
            ConvBranch(conv=ConvLayer(weight=np.ones((2, 1, 3, 3)), padding=1, groups=2)),
            ConvBranch(conv=ConvLayer(weight=np.ones((2, 1, 1, 1)), stride=2, groups=2)),
        ],
        in_channels=2,
        out_channels=2,
    )
    with pytest.raises(ContractViolationException, match="mixed strides"):
        fuse_branches(spec)


def test_identity_branch_needs_matching_channels_and_unit_stride():
    mismatched = BranchSpec(
        branches=[ConvBranch(conv=ConvLayer(weight=np.ones((4, 2, 1, 1)))), ConvBranch(conv=None)],
        in_channels=2,
        out_channels=4,
    )
    with pytest.raises(ContractViolationException):
        fuse_branches(mismatched)
    strided = BranchSpec(
        branches=[ConvBranch(conv=ConvLayer(weight=np.ones((2, 2, 1, 1)), stride=2)), ConvBranch(conv=None)],
        in_channels=2,
        out_channels=2,
    )
    with pytest.raises(ContractViolationException, match="stride 1"):
        fuse_branches(strided)


def test_off_centre_kernel_is_rejected():
    spec = BranchSpec(
        branches=[ConvBranch(conv=ConvLayer(weight=np.ones((1, 1, 3, 3))))], in_channels=1, out_channels=1
    )
    with pytest.raises(ContractViolationException, match="centred"):
        fuse_branches(spec)


def test_repconv_forward_needs_the_requested_form():
    init = ParameterInitializer(seed=2)
    train_only = build_token_mixer(init, 4)
    deploy_only = train_only.fuse()
    x = np.zeros((1, 4, 3, 3), dtype=np.float32)
    assert train_only.form == TRAIN_FORM and deploy_only.form == DEPLOY_FORM
    with pytest.raises(ContractViolationException):
        train_only.forward(x, DEPLOY_FORM)
    with pytest.raises(ContractViolationException):
        deploy_only.forward(x, TRAIN_FORM)
    with pytest.raises(ContractViolationException):
        deploy_only.forward(x, "onnx")
    with pytest.raises(ValueError):
        RepConv()


def test_fuse_reparameterizable_walks_lists_and_shares_the_rest():
    init = ParameterInitializer(seed=4)
    plain = ConvLayer(weight=np.ones((1, 1, 1, 1)))
    tree = [build_token_mixer(init, 4), plain]
    fused_tree = fuse_reparameterizable(tree)
    assert fused_tree[0].form == DEPLOY_FORM
    assert fused_tree[1] is plain
    assert tree[0].form == TRAIN_FORM, "the input tree must not be modified"


def test_certificate_passes_on_equivalent_forms_and_fails_on_perturbed_ones():
    init = ParameterInitializer(seed=6)
    mixer = build_token_mixer(init, 6)
    fused = mixer.fuse()
    report = certify_equivalence(
        lambda x: mixer.forward(x, TRAIN_FORM), lambda x: fused.forward(x, DEPLOY_FORM), (1, 6, 8, 8), trials=20
    )
    assert report.passed, report.summary()
    assert report.max_abs_diff <= 1e-4

    fused.fused.weight = fused.fused.weight + np.float32(1e-2)
    broken = certify_equivalence(
        lambda x: mixer.forward(x, TRAIN_FORM), lambda x: fused.forward(x, DEPLOY_FORM), (1, 6, 8, 8), trials=5
    )
    assert not broken.passed
    assert "FAIL" in broken.summary()


def test_certificate_reports_shape_mismatch_without_raising():
    report = certify_equivalence(lambda x: x, lambda x: x[:, :1], (1, 2, 3, 3), trials=2)
    assert not report.passed and report.max_abs_diff == float("inf")
