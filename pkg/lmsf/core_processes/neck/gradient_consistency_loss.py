import numpy as np

from lmsf.core_processes.tensor_core.conv2d import conv2d
from lmsf.core_processes.tensor_core.feature_map_contract import ensure_feature_map
from lmsf.core_processes.tensor_core.layer_models import ConvLayer
from lmsf.core_processes.tensor_core.sobel_gradient import grayscale, sobel_gradient
from lmsf.utilities.lmsf_exceptions import ContractViolationException

P3_STRIDE = 8


def mean_pool(x: np.ndarray, stride: int) -> np.ndarray:
    x = ensure_feature_map(x)
    n, c, h, w = x.shape
    if h % stride != 0 or w % stride != 0:
        raise ContractViolationException(f"mean pooling by {stride} needs dims divisible by {stride}, got {x.shape}")
    return x.reshape(n, c, h // stride, stride, w // stride, stride).mean(axis=(3, 5), dtype=np.float32)


def image_at_p3_grid(image: np.ndarray) -> np.ndarray:
    """Grayscale image mean-pooled onto the stride-8 grid."""
    return mean_pool(grayscale(image), P3_STRIDE)


def gradient_consistency_from_edge_map(edge_map: np.ndarray, image: np.ndarray, lambda_gc: float) -> float:
    reference = image_at_p3_grid(image)
    edge_map = ensure_feature_map(edge_map, "edge map")
    if edge_map.shape != reference.shape:
        raise ContractViolationException(
            f"edge map {edge_map.shape} must match the stride-8 image grid {reference.shape}"
        )
    if lambda_gc == 0:
        return 0.0
    difference = np.abs(sobel_gradient(edge_map) - sobel_gradient(reference))
    return float(lambda_gc * difference.mean(dtype=np.float64))


def gradient_consistency_loss(
    f3_refined: np.ndarray, edge_projection: ConvLayer, image: np.ndarray, lambda_gc: float
) -> float:
    """lambda_gc * mean |Sobel(edgeProj(F3~)) - Sobel(gray(I) pooled to stride 8)|, never negative"""
    return gradient_consistency_from_edge_map(conv2d(f3_refined, edge_projection), image, lambda_gc)
