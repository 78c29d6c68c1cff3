import numpy as np

from lmsf.core_processes.tensor_core.conv2d import conv2d
from lmsf.core_processes.tensor_core.layer_models import ConvLayer
from lmsf.core_processes.tensor_core.sobel_gradient import sobel_gradient
from lmsf.utilities.lmsf_exceptions import ContractViolationException


def _as_label_batch(label_map: np.ndarray) -> np.ndarray:
    label_map = np.asarray(label_map)
    if label_map.ndim == 2:
        label_map = label_map[None]
    if label_map.ndim != 3 or min(label_map.shape) < 1:
        raise ContractViolationException(f"label map must be (h, w) or (n, h, w), got shape {label_map.shape}")
    return label_map.astype(np.int64, copy=False)


def downsample_label_map(label_map: np.ndarray, stride: int) -> np.ndarray:
    """
    Block majority vote over stride x stride tiles; ties go to the smallest label.
    Returns (n, h / stride, w / stride).
    """
    labels = _as_label_batch(label_map)
    n, h, w = labels.shape
    if h % stride != 0 or w % stride != 0:
        raise ContractViolationException(f"label map {labels.shape} is not divisible by stride {stride}")
    if labels.min() < 0:
        raise ContractViolationException("label maps hold non-negative class ids")

    tiles = labels.reshape(n, h // stride, stride, w // stride, stride).transpose(0, 1, 3, 2, 4)
    tiles = tiles.reshape(n, h // stride, w // stride, stride * stride)
    candidate_labels = np.arange(int(labels.max()) + 1)
    votes = (tiles[..., None] == candidate_labels).sum(axis=3)
    # argmax returns the first maximum, i.e. the smallest tied label
    return votes.argmax(axis=-1).astype(labels.dtype)


def edge_map_from_labels(label_map: np.ndarray) -> np.ndarray:
    """1.0 where any 4-neighbour carries a different label, else 0.0; shape (n, 1, h, w)."""
    labels = _as_label_batch(label_map)
    edges = np.zeros(labels.shape, dtype=bool)
    vertical_change = labels[:, 1:, :] != labels[:, :-1, :]
    horizontal_change = labels[:, :, 1:] != labels[:, :, :-1]
    edges[:, 1:, :] |= vertical_change
    edges[:, :-1, :] |= vertical_change
    edges[:, :, 1:] |= horizontal_change
    edges[:, :, :-1] |= horizontal_change
    return edges[:, None].astype(np.float32)


def binary_cross_entropy_with_logits(logits: np.ndarray, targets: np.ndarray) -> float:
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    per_element = np.maximum(logits, 0.0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))
    return float(per_element.mean())


def edge_loss(fused: np.ndarray, edge_head: ConvLayer, gt_labels_at_p3: np.ndarray, lambda_edge: float) -> float:
    """lambda_edge * BCE-with-logits(EdgeHead(Sobel(G)), Edge(gt)); gt is already on the stride-8 grid."""
    edge_logits = conv2d(sobel_gradient(fused), edge_head)
    targets = edge_map_from_labels(gt_labels_at_p3)
    if targets.shape != edge_logits.shape:
        raise ContractViolationException(
            f"edge targets {targets.shape} must match the edge logits {edge_logits.shape}"
        )
    if lambda_edge == 0:
        return 0.0
    return lambda_edge * binary_cross_entropy_with_logits(edge_logits, targets)
