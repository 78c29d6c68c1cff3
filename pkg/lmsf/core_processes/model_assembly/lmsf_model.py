from pydantic import BaseModel, ConfigDict, field_validator

from lmsf.core_processes.backbone.backbone_forward import BackboneParams
from lmsf.core_processes.head.lmsh import LmshParams
from lmsf.core_processes.model_assembly.model_tree import count_parameters
from lmsf.core_processes.neck.ssff import SsffParams
from lmsf.core_processes.neck.tfe import TfeParams
from lmsf.data_layer.model_config.model_config import ModelConfig
from lmsf.system.paths_and_filenames.file_and_folder_names import FORM_CODES, TRAIN_FORM


class NeckParams(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    ssff: SsffParams
    tfe: TfeParams


class LmsfModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: ModelConfig
    form: str = TRAIN_FORM
    backbone: BackboneParams
    neck: NeckParams
    head: LmshParams

    @field_validator("form")
    @classmethod
    def check_form(cls, value: str) -> str:
        if value not in FORM_CODES:
            raise ValueError(f"form must be one of {list(FORM_CODES)}, got '{value}'")
        return value

    @property
    def parameter_count(self) -> int:
        return count_parameters(self)
