"""A lightweight multi-scale attention instance-segmentation engine: forward inference, re-parameterization and profiling"""

__author__ = """LMSF developers"""
__version__ = "v0.3.0"
__description__ = "Forward-inference engine, structural re-parameterization and analytic profiler for the LMSF-A segmentation network"

__package_name__ = "lmsf"

from lmsf.system.logging.configure_logging import configure_logging, LogLevel

configure_logging(LogLevel.INFO)
import logging

logger = logging.getLogger(__name__)
logger.debug(f"Initializing {__package_name__} package, version: {__version__}, from file: {__file__}")
