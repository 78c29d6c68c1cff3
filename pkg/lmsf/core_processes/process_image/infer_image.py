import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np

from lmsf.core_processes.head.extract_instances import instances_from_label_map, label_map_from_logits
from lmsf.core_processes.model_assembly.lmsf_forward import lmsf_forward
from lmsf.core_processes.model_assembly.lmsf_model import LmsfModel
from lmsf.data_layer.image_io.portable_anymap_io import image_to_tensor, read_pixmap, resize_label_map, write_graymap
from lmsf.data_layer.instance_models.instance_models import InstanceSet
from lmsf.utilities.save_to_json import save_to_json

logger = logging.getLogger(__name__)


def segment_image(model: LmsfModel, image_rgb: np.ndarray, min_area: Optional[int] = None):
    """
    Run the model on one RGB image and return (class-id map at the image's own resolution, instances).
    """
    height, width = image_rgb.shape[:2]
    logits = lmsf_forward(model, image_to_tensor(image_rgb, model.config.input_size), out_stride=1)
    label_map = resize_label_map(label_map_from_logits(logits), height, width)
    min_area = model.config.min_instance_area if min_area is None else min_area
    return label_map, instances_from_label_map(label_map, min_area)


def infer_image(
    model: LmsfModel,
    image_path: Union[str, Path],
    out_mask_path: Union[str, Path],
    out_json_path: Union[str, Path],
) -> InstanceSet:
    """
    Segment a P6 image and write the class-id map as a P5 graymap plus a JSON list of instances
    ({class, area, bbox}) in extraction order.
    """
    logger.info(f"Running {model.form}-form inference on {image_path}")
    image_rgb = read_pixmap(image_path)
    label_map, instance_set = segment_image(model, image_rgb)

    write_graymap(label_map, out_mask_path)
    out_json_path = Path(out_json_path)
    save_to_json(out_json_path.parent, instance_set.to_json_records(), out_json_path.name)
    logger.success(f"Found {len(instance_set)} instances; mask written to {out_mask_path}")
    return instance_set
