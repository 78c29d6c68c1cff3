from typing import Dict, Iterator, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class SegmentedInstance(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    class_id: int = Field(ge=1)
    mask: np.ndarray
    area: int = Field(ge=1)
    # inclusive [x0, y0, x1, y1]
    bbox: Tuple[int, int, int, int]
    first_pixel_index: int = Field(ge=0)

    def to_json_record(self) -> Dict:
        return {"class": self.class_id, "area": self.area, "bbox": list(self.bbox)}


class InstanceSet(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    image_shape: Tuple[int, int]
    instances: List[SegmentedInstance] = []

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self) -> Iterator[SegmentedInstance]:  # type: ignore[override]
        return iter(self.instances)

    def __getitem__(self, index: int) -> SegmentedInstance:
        return self.instances[index]

    def to_json_records(self) -> List[Dict]:
        return [instance.to_json_record() for instance in self.instances]

    def class_ids(self) -> List[int]:
        return [instance.class_id for instance in self.instances]
