import time
from pathlib import Path

from lmsf.system.paths_and_filenames.file_and_folder_names import (
    BASE_LMSF_DATA_FOLDER_NAME,
    DEFAULT_CONFIG_TOML_FILE_NAME,
    LOGS_INFO_AND_SETTINGS_FOLDER_NAME,
    LOG_FILE_FOLDER_NAME,
)


def os_independent_home_dir():
    return str(Path.home())


def get_lmsf_data_folder_path(create_folder: bool = True) -> str:
    lmsf_data_folder_path = Path(os_independent_home_dir(), BASE_LMSF_DATA_FOLDER_NAME)
    if create_folder:
        lmsf_data_folder_path.mkdir(exist_ok=True, parents=True)
    return str(lmsf_data_folder_path)


def get_log_file_path():
    log_folder_path = Path(get_lmsf_data_folder_path()) / LOGS_INFO_AND_SETTINGS_FOLDER_NAME / LOG_FILE_FOLDER_NAME
    log_folder_path.mkdir(exist_ok=True, parents=True)
    log_file_path = log_folder_path / create_log_file_name()
    return str(log_file_path)


def create_log_file_name():
    return "log_" + time.strftime("%m-%d-%Y-%H_%M_%S") + ".log"


def get_default_config_toml_path() -> Path:
    return Path(__file__).parent.parent.parent / "data_layer" / "model_config" / DEFAULT_CONFIG_TOML_FILE_NAME
