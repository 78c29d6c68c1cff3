import logging

import cv2
import numpy as np

from lmsf.data_layer.instance_models.instance_models import InstanceSet, SegmentedInstance
from lmsf.utilities.lmsf_exceptions import ContractViolationException

logger = logging.getLogger(__name__)

BACKGROUND_LABEL = 0
FOUR_CONNECTIVITY = 4


def label_map_from_logits(logits: np.ndarray) -> np.ndarray:
    """
    Per-pixel class id: 0 where the best class logit is <= 0 (probability <= 0.5), otherwise argmax + 1.
    Accepts (C, H, W) or (1, C, H, W); returns (H, W) uint8.
    """
    logits = np.asarray(logits, dtype=np.float32)
    if logits.ndim == 4:
        if logits.shape[0] != 1:
            raise ContractViolationException(f"instance extraction runs on one image at a time, got logits {logits.shape}")
        logits = logits[0]
    if logits.ndim != 3 or logits.shape[0] > 254:
        raise ContractViolationException(f"logits must be (C, H, W) with fewer than 255 classes, got {logits.shape}")

    best_class = logits.argmax(axis=0)
    best_logit = logits.max(axis=0)
    label_map = np.where(best_logit > 0, best_class + 1, BACKGROUND_LABEL)
    return label_map.astype(np.uint8)


def instances_from_label_map(label_map: np.ndarray, min_area: int) -> InstanceSet:
    """
    Split every class region into 4-connected components, keep those with area >= min_area, and order them
    by (class id, area descending, first pixel in raster order).
    """
    label_map = np.asarray(label_map)
    if label_map.ndim != 2:
        raise ContractViolationException(f"label map must be (H, W), got shape {label_map.shape}")

    instances = []
    for class_id in np.unique(label_map):
        if class_id == BACKGROUND_LABEL:
            continue
        class_mask = (label_map == class_id).astype(np.uint8)
        component_count, components, stats, _ = cv2.connectedComponentsWithStats(
            class_mask, connectivity=FOUR_CONNECTIVITY
        )
        for component_index in range(1, component_count):
            area = int(stats[component_index, cv2.CC_STAT_AREA])
            if area < min_area:
                continue
            mask = components == component_index
            left = int(stats[component_index, cv2.CC_STAT_LEFT])
            top = int(stats[component_index, cv2.CC_STAT_TOP])
            width = int(stats[component_index, cv2.CC_STAT_WIDTH])
            height = int(stats[component_index, cv2.CC_STAT_HEIGHT])
            instances.append(
                SegmentedInstance(
                    class_id=int(class_id),
                    mask=mask,
                    area=area,
                    bbox=(left, top, left + width - 1, top + height - 1),
                    first_pixel_index=int(np.flatnonzero(mask)[0]),
                )
            )

    instances.sort(key=lambda instance: (instance.class_id, -instance.area, instance.first_pixel_index))
    logger.debug(f"Extracted {len(instances)} instances with area >= {min_area}")
    return InstanceSet(image_shape=tuple(label_map.shape), instances=instances)


def extract_instances(logits: np.ndarray, min_area: int) -> InstanceSet:
    return instances_from_label_map(label_map_from_logits(logits), min_area)
