import logging
import struct
from pathlib import Path
from typing import Dict, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from lmsf.core_processes.model_assembly.build_model import build_model
from lmsf.core_processes.model_assembly.fuse_model import fuse_model
from lmsf.core_processes.model_assembly.lmsf_model import LmsfModel
from lmsf.core_processes.model_assembly.model_tree import iter_named_arrays
from lmsf.data_layer.model_config.model_config import ModelConfig
from lmsf.system.paths_and_filenames.file_and_folder_names import (
    DEPLOY_FORM,
    FORM_CODES,
    WEIGHT_FILE_MAGIC,
    WEIGHT_FILE_VERSION,
)
from lmsf.utilities.lmsf_exceptions import WeightFileException

logger = logging.getLogger(__name__)

FORMS_BY_CODE = {code: form for form, code in FORM_CODES.items()}
LITTLE_ENDIAN_FLOAT32 = np.dtype("<f4")


class WeightStore(BaseModel):
    """Header (form + config) and named float32 entries, in model traversal order."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    form: str
    config: ModelConfig
    entries: Dict[str, np.ndarray]

    @field_validator("form")
    @classmethod
    def check_form(cls, value: str) -> str:
        if value not in FORM_CODES:
            raise ValueError(f"form must be one of {list(FORM_CODES)}, got '{value}'")
        return value


def weight_store_from_model(model: LmsfModel) -> WeightStore:
    entries = {name: np.asarray(array, dtype=np.float32) for name, _, _, array in iter_named_arrays(model)}
    return WeightStore(form=model.form, config=model.config, entries=entries)


def model_skeleton(config: ModelConfig, form: str) -> LmsfModel:
    skeleton = build_model(config, seed=0)
    return fuse_model(skeleton) if form == DEPLOY_FORM else skeleton


def model_from_weight_store(store: WeightStore) -> LmsfModel:
    """
    Build a model of the stored form and config, then replace every array with the stored entry.
    Every model array needs exactly one entry of identical shape and no entry may be left over.
    """
    model = model_skeleton(store.config, store.form)
    unused_names = set(store.entries)
    for name, owner, field_name, array in iter_named_arrays(model):
        if name not in store.entries:
            raise WeightFileException(f"weight entry '{name}' is missing from the {store.form}-form store")
        stored = store.entries[name]
        if stored.shape != array.shape:
            raise WeightFileException(
                f"weight entry '{name}' has shape {stored.shape} but the model expects {array.shape}"
            )
        setattr(owner, field_name, np.array(stored, dtype=np.float32, copy=True))
        unused_names.discard(name)
    if unused_names:
        raise WeightFileException(
            f"{len(unused_names)} stored entries have no place in a {store.form}-form model, "
            f"e.g. '{sorted(unused_names)[0]}'"
        )
    return model


def encode_weight_store(store: WeightStore) -> bytes:
    config_blob = store.config.to_toml_string().encode("utf-8")
    chunks = [
        WEIGHT_FILE_MAGIC,
        struct.pack("<IB", WEIGHT_FILE_VERSION, FORM_CODES[store.form]),
        struct.pack("<I", len(config_blob)),
        config_blob,
        struct.pack("<I", len(store.entries)),
    ]
    for name, array in store.entries.items():
        encoded_name = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded_name)))
        chunks.append(encoded_name)
        chunks.append(struct.pack("<B", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype=LITTLE_ENDIAN_FLOAT32).tobytes())
    return b"".join(chunks)


class _ByteReader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.data):
            raise WeightFileException(
                f"weight file is truncated: needed {size} bytes for {what} at offset {self.offset}, "
                f"only {len(self.data) - self.offset} remain"
            )
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_weight_store(data: bytes) -> WeightStore:
    reader = _ByteReader(data)
    magic = reader.take(len(WEIGHT_FILE_MAGIC), "magic")
    if magic != WEIGHT_FILE_MAGIC:
        raise WeightFileException(f"not a weight file: expected magic {WEIGHT_FILE_MAGIC.decode()!r}, got {magic!r}")
    version, form_code = reader.unpack("<IB", "version and form")
    if version != WEIGHT_FILE_VERSION:
        raise WeightFileException(f"unsupported weight file version {version}, expected {WEIGHT_FILE_VERSION}")
    if form_code not in FORMS_BY_CODE:
        raise WeightFileException(f"unknown form code {form_code}")

    (config_length,) = reader.unpack("<I", "config length")
    config = ModelConfig.from_toml_string(reader.take(config_length, "config").decode("utf-8"))

    (entry_count,) = reader.unpack("<I", "entry count")
    entries = {}
    for _ in range(entry_count):
        (name_length,) = reader.unpack("<H", "entry name length")
        name = reader.take(name_length, "entry name").decode("utf-8")
        (rank,) = reader.unpack("<B", f"rank of '{name}'")
        shape = reader.unpack(f"<{rank}I", f"shape of '{name}'")
        element_count = int(np.prod(shape, dtype=np.int64))
        payload = reader.take(element_count * LITTLE_ENDIAN_FLOAT32.itemsize, f"payload of '{name}'")
        entries[name] = np.frombuffer(payload, dtype=LITTLE_ENDIAN_FLOAT32).astype(np.float32).reshape(shape)

    if reader.offset != len(data):
        raise WeightFileException(f"weight file has {len(data) - reader.offset} trailing bytes after the last entry")
    return WeightStore(form=FORMS_BY_CODE[form_code], config=config, entries=entries)


def save_weight_store(store: WeightStore, weight_file_path: Union[str, Path]) -> Path:
    weight_file_path = Path(weight_file_path)
    weight_file_path.parent.mkdir(parents=True, exist_ok=True)
    weight_file_path.write_bytes(encode_weight_store(store))
    logger.info(f"Saved {store.form}-form weights ({len(store.entries)} entries) to {weight_file_path}")
    return weight_file_path


def load_weight_store(weight_file_path: Union[str, Path]) -> WeightStore:
    weight_file_path = Path(weight_file_path)
    store = decode_weight_store(weight_file_path.read_bytes())
    logger.info(f"Loaded {store.form}-form weights ({len(store.entries)} entries) from {weight_file_path}")
    return store


def save_model(model: LmsfModel, weight_file_path: Union[str, Path]) -> Path:
    return save_weight_store(weight_store_from_model(model), weight_file_path)


def load_model(weight_file_path: Union[str, Path]) -> LmsfModel:
    return model_from_weight_store(load_weight_store(weight_file_path))
