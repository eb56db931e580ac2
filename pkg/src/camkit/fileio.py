"""File formats: portable graymap/pixmap images, ASCII PLY, and JSON schemas
for calibration results, poses, visualization scenes, and synthetic ground
truth."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .board import CheckerboardSpec
from .calibrate import CalibrationResult
from .errors import (
    CorruptFile,
    CorruptHeader,
    IoFailure,
    SchemaMismatch,
    TruncatedData,
    UnsupportedFormat,
)
from .geometry import (
    CameraIntrinsics,
    CameraPose,
    DistortionCoeffs,
    axis_angle_to_rotation,
    rotation_to_axis_angle,
)
from .pose import ExtrinsicsScene
from .sfm import PointCloud, SfmScene

CALIBRATION_SCHEMA_VERSION = 1


# --- portable graymap / pixmap ----------------------------------------------

def _parse_pnm_header(data: bytes):
    if len(data) < 2:
        raise CorruptHeader("file too short for a PNM header")
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise UnsupportedFormat(f"unsupported magic {magic!r}; only P5/P6 binary maps")
    pos = 2
    values = []
    while len(values) < 3:
        if pos >= len(data):
            raise CorruptHeader("header ended before width/height/maxval")
        c = data[pos:pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isdigit():
            start = pos
            while pos < len(data) and data[pos:pos + 1].isdigit():
                pos += 1
            values.append(int(data[start:pos]))
        else:
            raise CorruptHeader(f"unexpected byte {c!r} in header")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise CorruptHeader("missing whitespace after maxval")
    pos += 1
    width, height, maxval = values
    if maxval != 255:
        raise UnsupportedFormat(f"only maxval 255 supported, got {maxval}")
    if width <= 0 or height <= 0:
        raise CorruptHeader(f"invalid dimensions {width}x{height}")
    return magic, width, height, pos


def read_image(path) -> np.ndarray:
    """Read a binary PGM (P5) or PPM (P6) file as a grayscale uint8 array.

    Color input is converted by integer luma: ``(299 r + 587 g + 114 b +
    500) // 1000``.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    magic, width, height, pos = _parse_pnm_header(data)
    channels = 1 if magic == b"P5" else 3
    needed = width * height * channels
    raster = data[pos:pos + needed]
    if len(raster) < needed:
        raise TruncatedData(
            f"expected {needed} raster bytes, found {len(raster)}")
    pixels = np.frombuffer(raster, dtype=np.uint8)
    if channels == 1:
        return pixels.reshape(height, width).copy()
    rgb = pixels.reshape(height, width, 3).astype(np.uint32)
    gray = (299 * rgb[:, :, 0] + 587 * rgb[:, :, 1] + 114 * rgb[:, :, 2] + 500) // 1000
    return gray.astype(np.uint8)


def write_image(image: np.ndarray, path) -> None:
    """Write a grayscale uint8 array as binary PGM; bit-exact round trip."""
    img = np.asarray(image)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError("image must be a 2-d uint8 array")
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    try:
        Path(path).write_bytes(header + img.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# --- PLY ---------------------------------------------------------------------

def format_ply(cloud: PointCloud) -> str:
    """The exact ASCII PLY text for a point cloud (6 significant digits)."""
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar intensity",
        "end_header",
    ]
    for (x, y, z), value in zip(cloud.positions, cloud.intensity):
        gray = int(np.clip(round(value), 0, 255))
        lines.append(f"{x:#.6g} {y:#.6g} {z:#.6g} {gray}")
    return "\n".join(lines) + "\n"


def write_ply(cloud: PointCloud, path) -> None:
    try:
        Path(path).write_text(format_ply(cloud), encoding="ascii")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# --- JSON helpers -------------------------------------------------------------

def _require(doc: dict, key: str, context: str):
    if not isinstance(doc, dict) or key not in doc:
        raise SchemaMismatch(f"{context}: missing field {key!r}")
    return doc[key]


def _intrinsics_to_json(k: CameraIntrinsics) -> dict:
    mat = k.matrix()
    return {
        "fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy, "skew": k.skew,
        "matrix": mat.tolist(),
        "matrix_transposed": mat.T.tolist(),
    }


def _intrinsics_from_json(doc: dict, context: str) -> CameraIntrinsics:
    return CameraIntrinsics(
        fx=_require(doc, "fx", context), fy=_require(doc, "fy", context),
        cx=_require(doc, "cx", context), cy=_require(doc, "cy", context),
        skew=doc.get("skew", 0.0),
    )


def _distortion_to_json(d: DistortionCoeffs) -> dict:
    return {"k1": d.k1, "k2": d.k2, "k3": d.k3, "p1": d.p1, "p2": d.p2}


def _distortion_from_json(doc: dict, context: str) -> DistortionCoeffs:
    return DistortionCoeffs(
        k1=_require(doc, "k1", context), k2=_require(doc, "k2", context),
        k3=doc.get("k3", 0.0), p1=doc.get("p1", 0.0), p2=doc.get("p2", 0.0),
    )


def _pose_to_json(pose: CameraPose) -> dict:
    return {
        "axis_angle": rotation_to_axis_angle(pose.rotation).tolist(),
        "translation": pose.translation.tolist(),
    }


def _pose_from_json(doc: dict, context: str) -> CameraPose:
    rvec = np.array(_require(doc, "axis_angle", context), dtype=np.float64)
    t = np.array(_require(doc, "translation", context), dtype=np.float64)
    return CameraPose(axis_angle_to_rotation(rvec), t)


def _load_json(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptFile(f"{path} is not valid JSON: {exc}") from exc


def _dump_json(doc: dict, path) -> None:
    try:
        Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# --- calibration files --------------------------------------------------------

def write_calibration(result: CalibrationResult, path) -> None:
    """Persist a calibration to JSON.

    The intrinsic matrix is stored both in the canonical row-major layout
    and transposed (focal lengths on the diagonal, principal point in the
    third row), and all numeric fields survive a load round trip to 1e-12.
    """
    doc = {
        "schema_version": CALIBRATION_SCHEMA_VERSION,
        "image_size": {"width": result.image_size[0],
                       "height": result.image_size[1]},
        "error_metric": result.error_metric,
        "intrinsics": _intrinsics_to_json(result.intrinsics),
        "distortion": _distortion_to_json(result.distortion),
        "views": [
            dict(_pose_to_json(pose),
                 mean_error=float(err),
                 stderr=stderr.tolist())
            for pose, err, stderr in zip(result.poses, result.per_view_errors,
                                         result.pose_stderr)
        ],
        "overall_mean_error": result.overall_error,
        "stderr": {
            "intrinsics": dict(result.intrinsic_stderr),
            "distortion": dict(result.distortion_stderr),
        },
    }
    _dump_json(doc, path)


def read_calibration(path) -> CalibrationResult:
    """Load a calibration JSON written by :func:`write_calibration`.

    Raises CorruptFile for undecodable files and SchemaMismatch for missing
    fields.
    """
    doc = _load_json(path)
    ctx = str(path)
    version = _require(doc, "schema_version", ctx)
    if version != CALIBRATION_SCHEMA_VERSION:
        raise SchemaMismatch(f"{ctx}: unsupported schema version {version}")
    size = _require(doc, "image_size", ctx)
    intrinsics = _intrinsics_from_json(_require(doc, "intrinsics", ctx), ctx)
    distortion = _distortion_from_json(_require(doc, "distortion", ctx), ctx)
    views = _require(doc, "views", ctx)
    poses = []
    errors = []
    pose_stderr = []
    for view in views:
        poses.append(_pose_from_json(view, ctx))
        errors.append(_require(view, "mean_error", ctx))
        pose_stderr.append(view.get("stderr", [float("nan")] * 6))
    stderr = _require(doc, "stderr", ctx)
    return CalibrationResult(
        intrinsics=intrinsics,
        distortion=distortion,
        poses=tuple(poses),
        per_view_errors=np.array(errors, dtype=np.float64),
        overall_error=float(_require(doc, "overall_mean_error", ctx)),
        intrinsic_stderr=dict(_require(stderr, "intrinsics", ctx)),
        distortion_stderr=dict(_require(stderr, "distortion", ctx)),
        pose_stderr=np.array(pose_stderr, dtype=np.float64),
        image_size=(int(_require(size, "width", ctx)),
                    int(_require(size, "height", ctx))),
        error_metric=doc.get("error_metric", "mean_euclidean"),
    )


# --- other outputs ------------------------------------------------------------

def write_pose(pose: CameraPose, mean_error: float, path) -> None:
    doc = dict(_pose_to_json(pose),
               rotation=pose.rotation.tolist(),
               camera_center=pose.center.tolist(),
               mean_error=mean_error,
               units="mm")
    _dump_json(doc, path)


def write_extrinsics_scene(scene: ExtrinsicsScene, path) -> None:
    doc = {
        "mode": scene.mode,
        "units": scene.units,
        "cameras": [
            dict(_pose_to_json(f.pose),
                 apex=f.apex.tolist(),
                 base=f.base.tolist())
            for f in scene.frusta
        ],
        "boards": [
            dict(_pose_to_json(b.pose), corners=b.corners.tolist())
            for b in scene.boards
        ],
    }
    _dump_json(doc, path)


def write_sfm_scene(scene: SfmScene, path) -> None:
    doc = {
        "units": "mm",
        "view_order": list(scene.view_order),
        "views": {
            str(v): _pose_to_json(pose) for v, pose in sorted(scene.poses.items())
        },
        "n_tracks": len(scene.tracks),
        "n_points": len(scene.valid_tracks()),
        "mean_reprojection_error": scene.mean_reprojection_error,
    }
    _dump_json(doc, path)


# --- synthetic ground truth ---------------------------------------------------

def _board_to_json(spec: CheckerboardSpec) -> dict:
    return {"squares_x": spec.squares_x, "squares_y": spec.squares_y,
            "square_size": spec.square_size}


def board_from_json(doc: dict, context: str = "board") -> CheckerboardSpec:
    return CheckerboardSpec(
        squares_x=int(_require(doc, "squares_x", context)),
        squares_y=int(_require(doc, "squares_y", context)),
        square_size=float(_require(doc, "square_size", context)),
    )


def write_ground_truth(path, *, intrinsics: CameraIntrinsics,
                       distortion: DistortionCoeffs, image_size,
                       poses, images: list[str],
                       board: CheckerboardSpec | None = None,
                       cube: dict | None = None) -> None:
    doc = {
        "image_size": {"width": image_size[0], "height": image_size[1]},
        "intrinsics": _intrinsics_to_json(intrinsics),
        "distortion": _distortion_to_json(distortion),
        "poses": [_pose_to_json(p) for p in poses],
        "images": images,
    }
    if board is not None:
        doc["board"] = _board_to_json(board)
    if cube is not None:
        doc["cube"] = cube
    _dump_json(doc, path)


def read_ground_truth(path) -> dict:
    """Load a synthetic ground-truth file into plain objects."""
    doc = _load_json(path)
    ctx = str(path)
    size = _require(doc, "image_size", ctx)
    out = {
        "image_size": (int(_require(size, "width", ctx)),
                       int(_require(size, "height", ctx))),
        "intrinsics": _intrinsics_from_json(_require(doc, "intrinsics", ctx), ctx),
        "distortion": _distortion_from_json(_require(doc, "distortion", ctx), ctx),
        "poses": [_pose_from_json(p, ctx) for p in _require(doc, "poses", ctx)],
        "images": doc.get("images", []),
    }
    if "board" in doc:
        out["board"] = board_from_json(doc["board"], ctx)
    if "cube" in doc:
        out["cube"] = doc["cube"]
    return out
