import logging
from pathlib import Path
from typing import Tuple, Union

import cv2
import numpy as np

from lmsf.utilities.lmsf_exceptions import ImageFormatException

logger = logging.getLogger(__name__)

PIXMAP_MAGIC = b"P6"
GRAYMAP_MAGIC = b"P5"
SUPPORTED_MAXVAL = 255


def parse_anymap_header(data: bytes, expected_magic: bytes) -> Tuple[int, int, int, int]:
    """
    Parse "<magic> <width> <height> <maxval>" allowing '#' comments between tokens.

    Returns:
    - (width, height, maxval, offset of the first raster byte)
    """
    tokens = []
    offset = 0
    while len(tokens) < 4:
        while offset < len(data) and data[offset : offset + 1].isspace():
            offset += 1
        if offset >= len(data):
            raise ImageFormatException(f"image header ends early after {len(tokens)} of 4 fields")
        if data[offset : offset + 1] == b"#":
            while offset < len(data) and data[offset : offset + 1] not in (b"\n", b"\r"):
                offset += 1
            continue
        start = offset
        while offset < len(data) and not data[offset : offset + 1].isspace() and data[offset : offset + 1] != b"#":
            offset += 1
        tokens.append(data[start:offset])

    if tokens[0] != expected_magic:
        raise ImageFormatException(f"expected a {expected_magic.decode()} image, got magic {tokens[0]!r}")
    try:
        width, height, maxval = (int(token) for token in tokens[1:])
    except ValueError:
        raise ImageFormatException(f"image header fields must be integers, got {tokens[1:]}") from None
    if width < 1 or height < 1:
        raise ImageFormatException(f"image dimensions must be positive, got {width}x{height}")
    if maxval != SUPPORTED_MAXVAL:
        raise ImageFormatException(f"only 8-bit images with maxval {SUPPORTED_MAXVAL} are supported, got maxval {maxval}")
    if offset >= len(data) or not data[offset : offset + 1].isspace():
        raise ImageFormatException("image header must end with a single whitespace byte")
    return width, height, maxval, offset + 1


def read_pixmap(image_path: Union[str, Path]) -> np.ndarray:
    """Read a binary P6 pixmap as an (H, W, 3) uint8 RGB array."""
    image_path = Path(image_path)
    data = image_path.read_bytes()
    width, height, _, raster_offset = parse_anymap_header(data, PIXMAP_MAGIC)
    expected_bytes = width * height * 3
    if len(data) - raster_offset < expected_bytes:
        raise ImageFormatException(
            f"{image_path} is truncated: {len(data) - raster_offset} raster bytes, expected {expected_bytes}"
        )
    image_bgr = cv2.imdecode(np.frombuffer(data, dtype=np.uint8), cv2.IMREAD_COLOR)
    if image_bgr is None or image_bgr.shape[:2] != (height, width):
        raise ImageFormatException(f"could not decode {image_path} as a {width}x{height} pixmap")
    logger.debug(f"Read {width}x{height} pixmap from {image_path}")
    return cv2.cvtColor(image_bgr, cv2.COLOR_BGR2RGB)


def read_graymap(image_path: Union[str, Path]) -> np.ndarray:
    """Read a binary P5 graymap as an (H, W) uint8 array."""
    image_path = Path(image_path)
    data = image_path.read_bytes()
    width, height, _, _ = parse_anymap_header(data, GRAYMAP_MAGIC)
    image = cv2.imdecode(np.frombuffer(data, dtype=np.uint8), cv2.IMREAD_UNCHANGED)
    if image is None or image.shape[:2] != (height, width):
        raise ImageFormatException(f"could not decode {image_path} as a {width}x{height} graymap")
    return image


def _write_encoded(image: np.ndarray, extension: str, image_path: Union[str, Path]) -> Path:
    image_path = Path(image_path)
    image_path.parent.mkdir(parents=True, exist_ok=True)
    success, encoded = cv2.imencode(extension, image, [cv2.IMWRITE_PXM_BINARY, 1])
    if not success:
        raise ImageFormatException(f"could not encode image of shape {image.shape} as {extension}")
    image_path.write_bytes(encoded.tobytes())
    return image_path


def write_graymap(label_map: np.ndarray, image_path: Union[str, Path]) -> Path:
    label_map = np.asarray(label_map)
    if label_map.ndim != 2:
        raise ImageFormatException(f"a graymap is a single (H, W) plane, got shape {label_map.shape}")
    image_path = _write_encoded(label_map.astype(np.uint8), ".pgm", image_path)
    logger.debug(f"Wrote {label_map.shape[1]}x{label_map.shape[0]} graymap to {image_path}")
    return image_path


def write_pixmap(image_rgb: np.ndarray, image_path: Union[str, Path]) -> Path:
    image_rgb = np.asarray(image_rgb, dtype=np.uint8)
    if image_rgb.ndim != 3 or image_rgb.shape[2] != 3:
        raise ImageFormatException(f"a pixmap is an (H, W, 3) RGB array, got shape {image_rgb.shape}")
    return _write_encoded(cv2.cvtColor(image_rgb, cv2.COLOR_RGB2BGR), ".ppm", image_path)


def image_to_tensor(image_rgb: np.ndarray, input_size: int) -> np.ndarray:
    """Nearest-neighbour resize to input_size x input_size, scale to [0, 1], and lay out as (1, 3, S, S)."""
    resized = cv2.resize(image_rgb, (input_size, input_size), interpolation=cv2.INTER_NEAREST)
    return (resized.astype(np.float32) / np.float32(255.0)).transpose(2, 0, 1)[None].copy()


def resize_label_map(label_map: np.ndarray, height: int, width: int) -> np.ndarray:
    return cv2.resize(label_map.astype(np.uint8), (width, height), interpolation=cv2.INTER_NEAREST)
