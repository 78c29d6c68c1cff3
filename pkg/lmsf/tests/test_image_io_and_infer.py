import json

import numpy as np
import pytest

from lmsf.core_processes.model_assembly.build_model import build_model
from lmsf.core_processes.model_assembly.fuse_model import fuse_model
from lmsf.core_processes.model_assembly.model_tree import iter_named_arrays
from lmsf.core_processes.process_image.infer_image import infer_image, segment_image
from lmsf.data_layer.image_io.portable_anymap_io import (
    image_to_tensor,
    parse_anymap_header,
    read_graymap,
    read_pixmap,
    write_graymap,
    write_pixmap,
)
from lmsf.tests.conftest import make_small_config
from lmsf.utilities.lmsf_exceptions import ImageFormatException


@pytest.fixture
def rgb_image(random_number_generator) -> np.ndarray:
    return random_number_generator.integers(0, 256, size=(40, 48, 3), dtype=np.uint8)


@pytest.fixture
def pixmap_path(rgb_image, tmp_path):
    return write_pixmap(rgb_image, tmp_path / "image.ppm")


def test_pixmap_round_trip(rgb_image, pixmap_path):
    assert pixmap_path.read_bytes().startswith(b"P6")
    np.testing.assert_array_equal(read_pixmap(pixmap_path), rgb_image)


def test_hand_written_pixmap_is_read_as_rgb(tmp_path):
    raster = bytes([255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 20, 30, 40, 50, 60, 70, 80, 90])
    image_path = tmp_path / "tiny.ppm"
    image_path.write_bytes(b"P6\n3 2\n255\n" + raster)
    np.testing.assert_array_equal(read_pixmap(image_path), np.frombuffer(raster, np.uint8).reshape(2, 3, 3))


def test_graymap_round_trip(tmp_path, random_number_generator):
    label_map = random_number_generator.integers(0, 5, size=(7, 9), dtype=np.uint8)
    graymap_path = write_graymap(label_map, tmp_path / "labels.pgm")
    assert graymap_path.read_bytes().startswith(b"P5")
    np.testing.assert_array_equal(read_graymap(graymap_path), label_map)
    with pytest.raises(ImageFormatException):
        write_graymap(np.zeros((2, 2, 2)), tmp_path / "bad.pgm")


def test_header_comments_are_skipped():
    data = b"P6 # magic\n# a full comment line\n4 # width\n3\n255\n" + bytes(36)
    width, height, maxval, raster_offset = parse_anymap_header(data, b"P6")
    assert (width, height, maxval) == (4, 3, 255)
    assert len(data) - raster_offset == 36


@pytest.mark.parametrize(
    "data, message",
    [
        (b"P6\n4 3\n65535\n" + bytes(72), "maxval"),
        (b"P5\n4 3\n255\n" + bytes(12), "magic"),
        (b"P6\n4 x\n255\n", "integers"),
        (b"P6\n0 3\n255\n", "positive"),
        (b"P6\n4 3\n", "ends early"),
        (b"P6\n4 3\n255", "single whitespace"),
    ],
)
def test_bad_headers_are_rejected(data, message):
    with pytest.raises(ImageFormatException, match=message):
        parse_anymap_header(data, b"P6")


def test_truncated_raster_is_rejected(tmp_path):
    image_path = tmp_path / "short.ppm"
    image_path.write_bytes(b"P6\n4 3\n255\n" + bytes(35))
    with pytest.raises(ImageFormatException, match="truncated"):
        read_pixmap(image_path)


def test_image_to_tensor_layout(rgb_image):
    tensor = image_to_tensor(rgb_image, 64)
    assert tensor.shape == (1, 3, 64, 64) and tensor.dtype == np.float32
    assert tensor.min() >= 0.0 and tensor.max() <= 1.0


def test_segment_image_returns_a_map_at_image_resolution(small_deploy_model, rgb_image):
    label_map, instance_set = segment_image(small_deploy_model, rgb_image, min_area=1)
    assert label_map.shape == (40, 48)
    assert instance_set.image_shape == (40, 48)
    assert sum(instance.area for instance in instance_set.instances) == int(np.count_nonzero(label_map))


def test_inference_is_deterministic(small_deploy_model, pixmap_path, tmp_path):
    first = infer_image(small_deploy_model, pixmap_path, tmp_path / "a" / "mask.pgm", tmp_path / "a" / "out.json")
    second = infer_image(small_deploy_model, pixmap_path, tmp_path / "b" / "mask.pgm", tmp_path / "b" / "out.json")
    assert (tmp_path / "a" / "mask.pgm").read_bytes() == (tmp_path / "b" / "mask.pgm").read_bytes()
    assert (tmp_path / "a" / "out.json").read_text() == (tmp_path / "b" / "out.json").read_text()
    assert first.to_json_records() == second.to_json_records()


def test_inference_outputs_describe_the_same_instances(small_deploy_model, pixmap_path, tmp_path):
    instance_set = infer_image(small_deploy_model, pixmap_path, tmp_path / "mask.pgm", tmp_path / "out.json")
    records = json.loads((tmp_path / "out.json").read_text())
    assert records == instance_set.to_json_records()
    mask = read_graymap(tmp_path / "mask.pgm")
    assert mask.shape == (40, 48)
    assert mask.max() <= small_deploy_model.config.num_classes
    for record in records:
        assert set(record) == {"class", "area", "bbox"}
        x0, y0, x1, y1 = record["bbox"]
        assert 0 <= x0 <= x1 < 48 and 0 <= y0 <= y1 < 40
        assert record["area"] >= small_deploy_model.config.min_instance_area


def test_zero_weights_segment_nothing(pixmap_path, tmp_path):
    model = fuse_model(build_model(make_small_config(), seed=3))
    for _, owner, field_name, array in iter_named_arrays(model):
        setattr(owner, field_name, np.zeros_like(array))
    instance_set = infer_image(model, pixmap_path, tmp_path / "mask.pgm", tmp_path / "out.json")
    assert len(instance_set) == 0
    assert json.loads((tmp_path / "out.json").read_text()) == []
    assert np.all(read_graymap(tmp_path / "mask.pgm") == 0)
