"""Checkerboard target model and synthetic ground-truth rendering.

The board lives in the plane ``z = 0`` of its own frame. Interior corner
``(i, j)`` sits at ``(i * square_size, j * square_size, 0)``; the squares
extend one square beyond the interior corners on every side, and renders add
a white margin of one further square width. The square covering
``(0, 0)..(s, s)`` is black, fixing the 180-degree orientation of boards with
``squares_x != squares_y``.

Images are grayscale ``uint8`` numpy arrays of shape ``(height, width)``;
pixel centers sit at integer coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoardBehindCamera
from .geometry import (
    CameraIntrinsics,
    CameraPose,
    DistortionCoeffs,
    camera_depths,
    pixel_to_normalized,
    undistort_normalized,
)

BACKGROUND_GRAY = 128
BLACK = 0
WHITE = 255
SUPERSAMPLE = 4


@dataclass(frozen=True)
class CheckerboardSpec:
    """Checkerboard geometry: square counts per side and square edge length.

    The two square counts must differ so the pattern orientation is
    unambiguous. ``square_size`` is in world units (millimeters by
    convention).
    """

    squares_x: int = 10
    squares_y: int = 7
    square_size: float = 23.0

    def __post_init__(self):
        if self.squares_x < 3 or self.squares_y < 3:
            raise ValueError("need at least 3 squares per side")
        if self.squares_x == self.squares_y:
            raise ValueError("square counts must differ to fix the orientation")
        if not (self.square_size > 0):
            raise ValueError("square_size must be positive")

    @property
    def corners_x(self) -> int:
        return self.squares_x - 1

    @property
    def corners_y(self) -> int:
        return self.squares_y - 1

    @property
    def corner_count(self) -> int:
        return self.corners_x * self.corners_y


@dataclass(frozen=True)
class CornerGrid:
    """Detected (or synthesized) interior corners of one board view.

    ``corners`` is an ``(n, 2)`` pixel array in row-major order: index
    ``j * corners_x + i`` corresponds to board corner ``(i, j)``, matching
    :func:`board_world_points`.
    """

    corners: np.ndarray
    view_id: str = ""

    def __post_init__(self):
        c = np.asarray(self.corners, dtype=np.float64)
        if c.ndim != 2 or c.shape[1] != 2:
            raise ValueError("corners must have shape (n, 2)")
        c.setflags(write=False)
        object.__setattr__(self, "corners", c)

    def __len__(self) -> int:
        return self.corners.shape[0]


def board_world_points(spec: CheckerboardSpec) -> np.ndarray:
    """Interior corner positions on the board plane, shape (n, 3), z = 0.

    Row-major over j (rows) then i (columns), so the first point is the
    origin and the second is ``(square_size, 0, 0)``.
    """
    i = np.arange(spec.corners_x)
    j = np.arange(spec.corners_y)
    ii, jj = np.meshgrid(i, j)  # jj varies slowest along axis 0
    pts = np.column_stack([
        ii.ravel() * spec.square_size,
        jj.ravel() * spec.square_size,
        np.zeros(spec.corner_count),
    ])
    return pts


def board_outline(spec: CheckerboardSpec) -> np.ndarray:
    """The four outer corners of the painted board area, shape (4, 3)."""
    s = spec.square_size
    x0, x1 = -s, (spec.squares_x - 1) * s
    y0, y1 = -s, (spec.squares_y - 1) * s
    return np.array([
        [x0, y0, 0.0],
        [x1, y0, 0.0],
        [x1, y1, 0.0],
        [x0, y1, 0.0],
    ])


def _board_shade(spec: CheckerboardSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Intensity of board-plane points: squares, white margin, or background."""
    s = spec.square_size
    x0, x1 = -s, (spec.squares_x - 1) * s
    y0, y1 = -s, (spec.squares_y - 1) * s
    shade = np.full(x.shape, float(BACKGROUND_GRAY))

    margin = (x >= x0 - s) & (x <= x1 + s) & (y >= y0 - s) & (y <= y1 + s)
    shade[margin] = WHITE

    on_board = (x >= x0) & (x < x1) & (y >= y0) & (y < y1)
    ix = np.floor(x / s).astype(np.int64)
    iy = np.floor(y / s).astype(np.int64)
    black = on_board & (((ix + iy) & 1) == 0)
    shade[black] = BLACK
    return shade


def render_board(spec: CheckerboardSpec, intrinsics: CameraIntrinsics,
                 dist: DistortionCoeffs, pose: CameraPose,
                 width: int, height: int) -> np.ndarray:
    """Render the board seen by the given camera, 4x4 supersampled.

    Each output pixel averages a 4x4 grid of sub-rays cast through the lens
    model onto the board plane. Deterministic: identical inputs give
    bit-identical images. Raises BoardBehindCamera when every board corner
    has non-positive depth.
    """
    if np.all(camera_depths(board_outline(spec), pose) <= 0):
        raise BoardBehindCamera("all board corners have non-positive depth")

    ss = SUPERSAMPLE
    # Plane z=0 of the board frame, expressed in the camera frame.
    normal_cam = pose.rotation[:, 2]
    offset = float(normal_cam @ pose.translation)

    sub = (np.arange(ss) + 0.5) / ss - 0.5
    u_sub = (np.arange(width)[:, None] + sub[None, :]).ravel()

    image = np.empty((height, width), dtype=np.uint8)
    rows_per_chunk = max(1, 2 ** 21 // (width * ss * ss))
    for row0 in range(0, height, rows_per_chunk):
        row1 = min(row0 + rows_per_chunk, height)
        v_sub = (np.arange(row0, row1)[:, None] + sub[None, :]).ravel()
        uu, vv = np.meshgrid(u_sub, v_sub)
        px = np.column_stack([uu.ravel(), vv.ravel()])

        # 1e-8 in normalized units is far below the shading resolution.
        rays = undistort_normalized(pixel_to_normalized(px, intrinsics), dist,
                                    tol=1e-8)
        dirs = np.column_stack([rays, np.ones(len(rays))])
        # Ray scale where n . (s*dir - t) = 0; non-positive scale never hits.
        denom = dirs @ normal_cam
        safe = np.abs(denom) > 1e-15
        scale = np.full(len(dirs), -1.0)
        scale[safe] = offset / denom[safe]

        hit = scale > 1e-12
        pts_cam = dirs[hit] * scale[hit, None] - pose.translation
        pts_board = pts_cam @ pose.rotation  # == R^T applied row-wise

        shade = np.full(len(dirs), float(BACKGROUND_GRAY))
        shade[hit] = _board_shade(spec, pts_board[:, 0], pts_board[:, 1])

        block = shade.reshape(row1 - row0, ss, width, ss).mean(axis=(1, 3))
        image[row0:row1] = np.clip(np.rint(block), 0, 255).astype(np.uint8)
    return image
