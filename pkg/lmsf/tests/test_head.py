import numpy as np
import pytest

from lmsf.core_processes.head.edge_loss import (
    binary_cross_entropy_with_logits,
    downsample_label_map,
    edge_loss,
    edge_map_from_labels,
)
from lmsf.core_processes.head.extract_instances import (
    extract_instances,
    instances_from_label_map,
    label_map_from_logits,
)
from lmsf.core_processes.head.lmsh import (
    LMSH_DEEP_MIX_PROBE,
    LMSH_FUSED_PROBE,
    LMSH_FUSION_GATE_PROBE,
    LMSH_U3_PROBE,
    lmsh_forward,
    lmsh_fuse,
    lmsh_scale_features,
)
from lmsf.core_processes.model_assembly.auxiliary_losses import evaluate_auxiliary_losses
from lmsf.core_processes.model_assembly.build_model import build_model
from lmsf.core_processes.model_assembly.model_tree import count_parameters
from lmsf.core_processes.tensor_core.activation_probe import ActivationProbe
from lmsf.core_processes.tensor_core.activations import softplus
from lmsf.core_processes.tensor_core.conv2d import conv2d
from lmsf.core_processes.tensor_core.sobel_gradient import sobel_gradient
from lmsf.data_layer.instance_models.instance_models import SegmentedInstance
from lmsf.diagnostics.selfcheck.reference_oracles import flood_fill_components
from lmsf.tests.conftest import make_small_config
from lmsf.utilities.lmsf_exceptions import ContractViolationException


def head_inputs(rng: np.random.Generator, channels: int, p3_size: int = 8):
    return tuple(
        rng.standard_normal((1, channels, p3_size // scale, p3_size // scale)).astype(np.float32)
        for scale in (1, 2, 4)
    )


@pytest.mark.parametrize("out_stride, expected_size", [(8, 8), (4, 16), (1, 64)])
def test_lmsh_logit_shapes(small_deploy_model, random_number_generator, out_stride, expected_size):
    inputs = head_inputs(random_number_generator, small_deploy_model.config.fused_channels)
    logits = lmsh_forward(*inputs, small_deploy_model.head, out_stride=out_stride)
    assert logits.shape == (1, small_deploy_model.config.num_classes, expected_size, expected_size)


def test_lmsh_rejects_unknown_output_stride(small_deploy_model, random_number_generator):
    inputs = head_inputs(random_number_generator, small_deploy_model.config.fused_channels)
    with pytest.raises(ContractViolationException, match="out_stride"):
        lmsh_forward(*inputs, small_deploy_model.head, out_stride=2)


def test_lmsh_fusion_is_a_convex_mix(small_deploy_model, random_number_generator):
    inputs = head_inputs(random_number_generator, small_deploy_model.config.fused_channels)
    with ActivationProbe() as probe:
        lmsh_forward(*inputs, small_deploy_model.head, out_stride=8)
    gate = probe.get(LMSH_FUSION_GATE_PROBE)[0]
    u3 = probe.get(LMSH_U3_PROBE)[0]
    deep = probe.get(LMSH_DEEP_MIX_PROBE)[0]
    fused = probe.get(LMSH_FUSED_PROBE)[0]
    slack = 1e-5 * (1 + np.maximum(np.abs(u3), np.abs(deep)))
    assert np.all(gate > 0) and np.all(gate < 1)
    assert np.all(fused >= np.minimum(u3, deep) - slack)
    assert np.all(fused <= np.maximum(u3, deep) + slack)


def test_lmsh_open_gate_passes_the_stride_8_scale(small_deploy_model, random_number_generator):
    params = small_deploy_model.head
    open_gate = params.gate_conv.model_copy(
        update={"bias": np.full(params.head_channels, 1e4, dtype=np.float32)}
    )
    open_params = params.model_copy(update={"gate_conv": open_gate})
    u3, u4, u5 = lmsh_scale_features(
        *head_inputs(random_number_generator, small_deploy_model.config.fused_channels), open_params
    )
    np.testing.assert_allclose(lmsh_fuse(u3, u4, u5, open_params), u3, atol=1e-5)


def test_lmsh_zero_deep_scales_leave_gated_stride_8_scale(small_deploy_model, random_number_generator):
    params = small_deploy_model.head
    unbiased_mix = params.deep_mix.model_copy(update={"bias": np.zeros(params.head_channels, dtype=np.float32)})
    params = params.model_copy(update={"deep_mix": unbiased_mix})
    u3 = random_number_generator.standard_normal((1, params.head_channels, 8, 8)).astype(np.float32)
    zeros = np.zeros_like(u3)
    with ActivationProbe() as probe:
        fused = lmsh_fuse(u3, zeros, zeros, params)
    np.testing.assert_array_equal(fused, probe.get(LMSH_FUSION_GATE_PROBE)[0] * u3)


def with_first_block_pointwise_shifted(params, set_index: int):
    blocks = [list(block_set) for block_set in params.blocks]
    block = blocks[set_index][0]
    shifted_pointwise = block.pointwise.model_copy(update={"weight": block.pointwise.weight + np.float32(0.1)})
    blocks[set_index][0] = block.model_copy(update={"pointwise": shifted_pointwise})
    return params.model_copy(update={"blocks": blocks})


def test_shared_block_weights_feed_every_scale(random_number_generator):
    params = build_model(make_small_config(share_head_weights=True), seed=0).head
    inputs = head_inputs(random_number_generator, params.projections[0].in_channels)
    before = lmsh_scale_features(*inputs, params)
    after = lmsh_scale_features(*inputs, with_first_block_pointwise_shifted(params, 0))
    for scale_before, scale_after in zip(before, after):
        assert np.abs(scale_after - scale_before).max() > 1e-4


def test_untied_block_weights_feed_only_their_own_scale(random_number_generator):
    params = build_model(make_small_config(share_head_weights=False), seed=0).head
    inputs = head_inputs(random_number_generator, params.projections[0].in_channels)
    before = lmsh_scale_features(*inputs, params)
    after = lmsh_scale_features(*inputs, with_first_block_pointwise_shifted(params, 0))
    assert np.abs(after[0] - before[0]).max() > 1e-4
    np.testing.assert_array_equal(after[1], before[1])
    np.testing.assert_array_equal(after[2], before[2])


def test_untied_head_adds_two_extra_weight_sets():
    tied = build_model(make_small_config(share_head_weights=True), seed=0).head
    untied = build_model(make_small_config(share_head_weights=False), seed=0).head
    shared_weight_set = count_parameters(tied.projections[0]) + count_parameters(tied.blocks[0])
    assert tied.shares_weights and not untied.shares_weights
    assert count_parameters(untied) - count_parameters(tied) == 2 * shared_weight_set


def test_downsample_label_map_majority_and_ties():
    label_map = np.array(
        [
            [1, 2, 0, 3],
            [2, 1, 3, 3],
        ]
    )
    np.testing.assert_array_equal(downsample_label_map(label_map, 2), [[[1, 3]]])
    with pytest.raises(ContractViolationException):
        downsample_label_map(np.zeros((3, 4), dtype=int), 2)


def test_edge_map_marks_both_sides_of_a_boundary():
    label_map = np.array([[1, 1, 2, 2]] * 3)
    edges = edge_map_from_labels(label_map)
    assert edges.shape == (1, 1, 3, 4)
    np.testing.assert_array_equal(edges[0, 0], [[0, 1, 1, 0]] * 3)
    assert np.all(edge_map_from_labels(np.ones((4, 4), dtype=int)) == 0)


def test_binary_cross_entropy_matches_softplus_form():
    logits = np.array([-30.0, -1.0, 0.0, 2.5, 40.0])
    targets = np.array([0.0, 1.0, 0.0, 1.0, 1.0])
    expected = np.mean(np.logaddexp(0.0, logits) - logits * targets)
    assert binary_cross_entropy_with_logits(logits, targets) == pytest.approx(expected, rel=1e-12)


def test_edge_loss_on_constant_labels_is_mean_softplus(small_deploy_model, random_number_generator):
    params = small_deploy_model.head
    fused = random_number_generator.standard_normal((1, params.head_channels, 8, 8)).astype(np.float32)
    constant_labels = np.full((8, 8), 2)
    edge_logits = conv2d(sobel_gradient(fused), params.edge_head)
    expected = 0.1 * float(np.mean(softplus(edge_logits), dtype=np.float64))
    assert edge_loss(fused, params.edge_head, constant_labels, 0.1) == pytest.approx(expected, rel=1e-5)
    assert edge_loss(fused, params.edge_head, constant_labels, 0.0) == 0.0
    with pytest.raises(ContractViolationException):
        edge_loss(fused, params.edge_head, np.full((4, 4), 2), 0.1)


def test_saturated_edge_logits_drive_the_loss_to_zero():
    targets = edge_map_from_labels(np.array([[1, 1, 2, 2]] * 4))
    saturated = np.where(targets > 0, 60.0, -60.0)
    assert binary_cross_entropy_with_logits(saturated, targets) < 1e-20


def test_auxiliary_losses_are_finite_and_non_negative(small_train_model, small_image, random_number_generator):
    gt_label_map = random_number_generator.integers(0, 3, size=small_image.shape[2:])
    report = evaluate_auxiliary_losses(small_train_model, small_image, gt_label_map)
    assert report.gradient_consistency >= 0 and report.edge >= 0
    assert np.isfinite(report.total)


def test_label_map_from_logits_treats_non_positive_scores_as_background():
    logits = np.full((3, 2, 2), -1.0, dtype=np.float32)
    logits[:, 0, 0] = 0.0
    logits[2, 0, 1] = 0.5
    logits[0, 1, 1] = 3.0
    logits[1, 1, 1] = 2.0
    np.testing.assert_array_equal(label_map_from_logits(logits), [[0, 3], [0, 1]])
    np.testing.assert_array_equal(label_map_from_logits(logits[None]), label_map_from_logits(logits))
    with pytest.raises(ContractViolationException):
        label_map_from_logits(np.stack([logits, logits]))


def test_all_background_gives_no_instances():
    instances = extract_instances(np.full((1, 4, 32, 32), -2.0, dtype=np.float32), min_area=1)
    assert len(instances) == 0
    assert instances.image_shape == (32, 32)


def test_instance_set_iterates_and_indexes_its_instances():
    label_map = np.zeros((6, 6), dtype=np.uint8)
    label_map[0:2, 0:2] = 1
    label_map[4:6, 3:6] = 2
    instances = instances_from_label_map(label_map, min_area=1)
    assert all(isinstance(instance, SegmentedInstance) for instance in instances)
    assert list(instances) == instances.instances
    assert instances[0] is instances.instances[0]
    assert [instance.class_id for instance in instances] == instances.class_ids() == [1, 2]


def test_two_squares_give_two_instances():
    logits = np.full((4, 40, 40), -1.0, dtype=np.float32)
    logits[0, 2:12, 3:13] = 1.0
    logits[0, 25:35, 20:30] = 1.0
    instances = extract_instances(logits, min_area=50)
    assert len(instances) == 2
    assert [instance.area for instance in instances] == [100, 100]
    assert instances.instances[0].bbox == (3, 2, 12, 11)
    assert instances.instances[1].bbox == (20, 25, 29, 34)
    assert instances.to_json_records()[0] == {"class": 1, "area": 100, "bbox": [3, 2, 12, 11]}
    assert len(extract_instances(logits, min_area=101)) == 0


def test_instances_are_ordered_by_class_then_area_then_position():
    label_map = np.zeros((12, 12), dtype=np.uint8)
    label_map[0:2, 0:2] = 1
    label_map[5:9, 5:9] = 1
    label_map[0:3, 8:11] = 2
    label_map[10, 0] = 1
    label_map[10, 11] = 1
    instances = instances_from_label_map(label_map, min_area=1)
    assert [(instance.class_id, instance.area) for instance in instances] == [
        (1, 16),
        (1, 4),
        (1, 1),
        (1, 1),
        (2, 9),
    ]
    assert instances.instances[2].first_pixel_index == 10 * 12
    assert instances.instances[3].first_pixel_index == 10 * 12 + 11


def test_diagonal_neighbours_are_separate_instances():
    label_map = np.eye(4, dtype=np.uint8)
    instances = instances_from_label_map(label_map, min_area=1)
    assert len(instances) == 4
    masks = np.stack([instance.mask for instance in instances])
    np.testing.assert_array_equal(masks.sum(axis=0), label_map)


def test_instances_agree_with_flood_fill(random_number_generator):
    for _ in range(20):
        label_map = random_number_generator.integers(0, 3, size=(12, 15)).astype(np.uint8)
        instances = instances_from_label_map(label_map, min_area=2)
        extracted = sorted((instance.class_id, instance.area) for instance in instances)
        assert extracted == sorted(flood_fill_components(label_map, min_area=2))
        for instance in instances:
            assert np.all(label_map[instance.mask] == instance.class_id)
