import logging

logger = logging.getLogger(__name__)

# directory names
BASE_LMSF_DATA_FOLDER_NAME = "lmsf_data"
LOGS_INFO_AND_SETTINGS_FOLDER_NAME = "logs_info_and_settings"
LOG_FILE_FOLDER_NAME = "logs"

# file names
DEFAULT_CONFIG_TOML_FILE_NAME = "default_lmsf_config.toml"

# weight file layout
WEIGHT_FILE_MAGIC = b"LMSF"
WEIGHT_FILE_VERSION = 1
TRAIN_FORM = "train"
DEPLOY_FORM = "deploy"
FORM_CODES = {TRAIN_FORM: 0, DEPLOY_FORM: 1}
