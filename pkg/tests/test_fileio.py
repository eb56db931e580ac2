import json

import numpy as np
import pytest

from camkit import (
    CalibrationDataset,
    CameraIntrinsics,
    DistortionCoeffs,
    PointCloud,
    calibrate,
)
from camkit.errors import (
    CorruptFile,
    CorruptHeader,
    SchemaMismatch,
    TruncatedData,
    UnsupportedFormat,
)
from camkit.fileio import (
    format_ply,
    read_calibration,
    read_image,
    write_calibration,
    write_image,
    write_ply,
)
from camkit.synthetic import sample_board_poses, synthesize_corner_views

from conftest import IMAGE_HEIGHT, IMAGE_WIDTH


def test_pgm_roundtrip_is_bit_exact(tmp_path):
    img = np.array([[0, 128], [255, 7]], dtype=np.uint8)
    path = tmp_path / "tiny.pgm"
    write_image(img, path)
    assert np.array_equal(read_image(path), img)


def test_pgm_roundtrip_random(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(37, 61), dtype=np.uint8)
    path = tmp_path / "r.pgm"
    write_image(img, path)
    assert np.array_equal(read_image(path), img)


def test_ppm_luma_conversion(tmp_path):
    path = tmp_path / "c.ppm"
    path.write_bytes(b"P6\n1 1\n255\n" + bytes([255, 0, 0]))
    assert read_image(path)[0, 0] == 76
    path.write_bytes(b"P6\n1 1\n255\n" + bytes([0, 255, 0]))
    assert read_image(path)[0, 0] == 150  # (587*255+500)//1000
    path.write_bytes(b"P6\n1 1\n255\n" + bytes([10, 20, 30]))
    assert read_image(path)[0, 0] == (299 * 10 + 587 * 20 + 114 * 30 + 500) // 1000


def test_p4_is_unsupported(tmp_path):
    path = tmp_path / "b.pnm"
    path.write_bytes(b"P4\n8 8\n" + bytes(8))
    with pytest.raises(UnsupportedFormat):
        read_image(path)


def test_wide_maxval_is_unsupported(tmp_path):
    path = tmp_path / "w.pgm"
    path.write_bytes(b"P5\n2 2\n65535\n" + bytes(8))
    with pytest.raises(UnsupportedFormat):
        read_image(path)


def test_truncated_raster(tmp_path):
    path = tmp_path / "t.pgm"
    path.write_bytes(b"P5\n4 4\n255\n" + bytes(7))
    with pytest.raises(TruncatedData):
        read_image(path)


def test_corrupt_header(tmp_path):
    path = tmp_path / "h.pgm"
    path.write_bytes(b"P5\n4 four\n255\n" + bytes(16))
    with pytest.raises(CorruptHeader):
        read_image(path)


def test_header_comments_are_skipped(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# made by hand\n2 1\n# another\n255\n" + bytes([9, 9]))
    assert read_image(path).shape == (1, 2)


GOLDEN_SINGLE_POINT_PLY = """ply
format ascii 1.0
element vertex 1
property float x
property float y
property float z
property uchar intensity
end_header
1.00000 2.00000 3.00000 150
"""


def test_ply_golden_single_point(tmp_path):
    cloud = PointCloud(positions=np.array([[1.0, 2.0, 3.0]]),
                       intensity=np.array([150.0]))
    assert format_ply(cloud) == GOLDEN_SINGLE_POINT_PLY
    path = tmp_path / "one.ply"
    write_ply(cloud, path)
    assert path.read_text() == GOLDEN_SINGLE_POINT_PLY


def test_ply_empty_cloud():
    cloud = PointCloud(positions=np.empty((0, 3)), intensity=np.empty(0))
    text = format_ply(cloud)
    assert "element vertex 0" in text
    assert text.rstrip().endswith("end_header")


def test_ply_vertex_count():
    rng = np.random.default_rng(2)
    cloud = PointCloud(positions=rng.normal(size=(54, 3)),
                       intensity=rng.uniform(0, 255, 54))
    text = format_ply(cloud)
    assert "element vertex 54" in text
    body = text.split("end_header\n", 1)[1]
    assert len(body.splitlines()) == 54


@pytest.fixture(scope="module")
def calibration_result(board_spec, ref_intrinsics, ref_distortion):
    rng = np.random.default_rng(33)
    poses = sample_board_poses(board_spec, ref_intrinsics, ref_distortion,
                               IMAGE_WIDTH, IMAGE_HEIGHT, 4, rng)
    grids = synthesize_corner_views(board_spec, ref_intrinsics, ref_distortion,
                                    poses, noise_sigma=0.3, rng=rng)
    dataset = CalibrationDataset(spec=board_spec, views=tuple(grids),
                                 image_width=IMAGE_WIDTH,
                                 image_height=IMAGE_HEIGHT)
    return calibrate(dataset)


def test_calibration_roundtrip(tmp_path, calibration_result):
    path = tmp_path / "calib.json"
    write_calibration(calibration_result, path)
    loaded = read_calibration(path)
    a, b = calibration_result, loaded
    for name in ("fx", "fy", "cx", "cy", "skew"):
        assert abs(getattr(a.intrinsics, name) - getattr(b.intrinsics, name)) <= 1e-12
    for name in ("k1", "k2", "k3", "p1", "p2"):
        assert abs(getattr(a.distortion, name) - getattr(b.distortion, name)) <= 1e-12
    assert abs(a.overall_error - b.overall_error) <= 1e-12
    assert np.max(np.abs(a.per_view_errors - b.per_view_errors)) <= 1e-12
    assert np.max(np.abs(a.pose_stderr - b.pose_stderr)) <= 1e-12
    for pa, pb in zip(a.poses, b.poses):
        assert np.max(np.abs(pa.rotation - pb.rotation)) <= 1e-12
        assert np.max(np.abs(pa.translation - pb.translation)) <= 1e-12
    assert a.intrinsic_stderr.keys() == b.intrinsic_stderr.keys()
    for key in a.intrinsic_stderr:
        assert abs(a.intrinsic_stderr[key] - b.intrinsic_stderr[key]) <= 1e-12
    assert a.image_size == b.image_size
    assert a.error_metric == b.error_metric


def test_transposed_intrinsics_layout(tmp_path, calibration_result, board_spec):
    from dataclasses import replace
    result = replace(
        calibration_result,
        intrinsics=CameraIntrinsics(fx=839.345758, fy=839.557331,
                                    cx=332.366095, cy=259.509924))
    path = tmp_path / "ref.json"
    write_calibration(result, path)
    doc = json.loads(path.read_text())
    transposed = doc["intrinsics"]["matrix_transposed"]
    assert transposed[0][0] == 839.345758
    assert transposed[1][1] == 839.557331
    assert transposed[2] == [332.366095, 259.509924, 1.0]
    assert transposed[0][1:] == [0.0, 0.0]
    canonical = doc["intrinsics"]["matrix"]
    assert canonical[0][2] == 332.366095
    assert canonical[2] == [0.0, 0.0, 1.0]


def test_missing_distortion_is_schema_mismatch(tmp_path, calibration_result):
    path = tmp_path / "calib.json"
    write_calibration(calibration_result, path)
    doc = json.loads(path.read_text())
    del doc["distortion"]
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaMismatch):
        read_calibration(path)


def test_garbage_is_corrupt_file(tmp_path):
    path = tmp_path / "x.json"
    path.write_text("{not json")
    with pytest.raises(CorruptFile):
        read_calibration(path)
