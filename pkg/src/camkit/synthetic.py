"""Synthetic ground-truth scenes: board views, corner datasets, textured cubes.

Everything here is deterministic given a seed and exists so the rest of the
toolkit can be verified end-to-end without physical captures.
"""

from __future__ import annotations

import numpy as np

from .board import CheckerboardSpec, CornerGrid, board_outline, board_world_points
from .geometry import (
    CameraIntrinsics,
    CameraPose,
    DistortionCoeffs,
    camera_depths,
    pixel_to_normalized,
    project,
    undistort_normalized,
)


def _rot_xyz(ax: float, ay: float, az: float) -> np.ndarray:
    cx, sx = np.cos(ax), np.sin(ax)
    cy, sy = np.cos(ay), np.sin(ay)
    cz, sz = np.cos(az), np.sin(az)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def frontoparallel_pose(spec: CheckerboardSpec, intrinsics: CameraIntrinsics,
                        square_px: float) -> CameraPose:
    """Board facing the camera head-on with one square ~``square_px`` wide,
    centered on the principal axis."""
    depth = intrinsics.fx * spec.square_size / square_px
    center = np.array([
        (spec.squares_x - 2) * spec.square_size / 2.0,
        (spec.squares_y - 2) * spec.square_size / 2.0,
        0.0,
    ])
    return CameraPose(np.eye(3), np.array([0.0, 0.0, depth]) - center)


def sample_board_poses(spec: CheckerboardSpec, intrinsics: CameraIntrinsics,
                       dist: DistortionCoeffs, width: int, height: int,
                       n_views: int, rng: np.random.Generator,
                       max_tilt_deg: float = 40.0) -> list[CameraPose]:
    """Random front-facing poses keeping the whole board inside the image.

    Tilts about both board axes are drawn up to ``max_tilt_deg`` and the
    in-plane angle freely, with the board center aimed near a random image
    point; candidates that clip the image border are rejected and redrawn.
    """
    board_center = np.array([
        (spec.squares_x - 2) * spec.square_size / 2.0,
        (spec.squares_y - 2) * spec.square_size / 2.0,
        0.0,
    ])
    diag_mm = np.hypot(spec.squares_x, spec.squares_y) * spec.square_size
    f = 0.5 * (intrinsics.fx + intrinsics.fy)
    base_depth = f * diag_mm / (0.55 * min(width, height))
    outline = board_outline(spec)

    poses: list[CameraPose] = []
    attempts = 0
    while len(poses) < n_views:
        attempts += 1
        if attempts > 200 * n_views:
            raise RuntimeError("could not sample enough valid board poses")
        tilt = np.deg2rad(max_tilt_deg)
        ax, ay = rng.uniform(-tilt, tilt, size=2)
        az = rng.uniform(-np.pi, np.pi)
        rot = _rot_xyz(ax, ay, az)
        depth = base_depth * rng.uniform(1.0, 1.6)
        target_px = np.array([
            rng.uniform(0.35, 0.65) * (width - 1),
            rng.uniform(0.35, 0.65) * (height - 1),
        ])
        aim = pixel_to_normalized(target_px, intrinsics)
        cam_center = np.array([aim[0] * depth, aim[1] * depth, depth])
        t = cam_center - rot @ board_center
        pose = CameraPose(rot, t)

        if np.any(camera_depths(outline, pose) <= 0.1 * depth):
            continue
        px = project(outline, pose, intrinsics, dist)
        margin = 0.04 * min(width, height)
        if (px[:, 0].min() < margin or px[:, 0].max() > width - 1 - margin
                or px[:, 1].min() < margin or px[:, 1].max() > height - 1 - margin):
            continue
        poses.append(pose)
    return poses


def synthesize_corner_views(spec: CheckerboardSpec, intrinsics: CameraIntrinsics,
                            dist: DistortionCoeffs, poses: list[CameraPose],
                            noise_sigma: float = 0.0,
                            rng: np.random.Generator | None = None) -> list[CornerGrid]:
    """Project the board's interior corners through each pose.

    With ``noise_sigma`` > 0, adds i.i.d. Gaussian noise per pixel coordinate
    (requires ``rng``).
    """
    world = board_world_points(spec)
    grids = []
    for idx, pose in enumerate(poses):
        px = project(world, pose, intrinsics, dist)
        if noise_sigma > 0:
            if rng is None:
                raise ValueError("noise requested but no rng given")
            px = px + rng.normal(0.0, noise_sigma, size=px.shape)
        grids.append(CornerGrid(corners=px, view_id=f"view_{idx:03d}"))
    return grids


# --- textured cube scenes for structure-from-motion ------------------------

_CUBE_BACKGROUND = 90


class CubeScene:
    """An axis-aligned cube at the origin with smooth random face textures."""

    def __init__(self, edge: float = 200.0, texture_seed: int = 7):
        self.edge = float(edge)
        rng = np.random.default_rng(texture_seed)
        # Three octaves of value noise per face, interpolated bilinearly.
        self._coarse = rng.uniform(0.0, 1.0, size=(6, 9, 9))
        self._mid = rng.uniform(0.0, 1.0, size=(6, 33, 33))
        self._fine = rng.uniform(0.0, 1.0, size=(6, 129, 129))

    def _noise(self, grid: np.ndarray, s: np.ndarray, t: np.ndarray) -> np.ndarray:
        n = grid.shape[0] - 1
        gs = np.clip(s * n, 0, n - 1e-9)
        gt = np.clip(t * n, 0, n - 1e-9)
        i0 = gs.astype(np.int64)
        j0 = gt.astype(np.int64)
        fs = gs - i0
        ft = gt - j0
        return (grid[i0, j0] * (1 - fs) * (1 - ft)
                + grid[i0 + 1, j0] * fs * (1 - ft)
                + grid[i0, j0 + 1] * (1 - fs) * ft
                + grid[i0 + 1, j0 + 1] * fs * ft)

    def face_intensity(self, face: np.ndarray, s: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Texture value in [0, 1] at face-local coordinates in [0, 1]."""
        out = np.empty(s.shape)
        for f in range(6):
            sel = face == f
            if not np.any(sel):
                continue
            val = (0.40 * self._noise(self._coarse[f], s[sel], t[sel])
                   + 0.35 * self._noise(self._mid[f], s[sel], t[sel])
                   + 0.25 * self._noise(self._fine[f], s[sel], t[sel]))
            out[sel] = 0.08 + 0.86 * val
        return out

    def intersect(self, origins: np.ndarray, dirs: np.ndarray):
        """First cube hit per ray: returns (points, face, hit_mask)."""
        half = self.edge / 2.0
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
        t_lo = (-half - origins) * inv
        t_hi = (half - origins) * inv
        t1 = np.minimum(t_lo, t_hi)
        t2 = np.maximum(t_lo, t_hi)
        t_near = np.nanmax(t1, axis=1)
        t_far = np.nanmin(t2, axis=1)
        hit = (t_near < t_far) & (t_near > 1e-9)
        pts = origins + dirs * t_near[:, None]
        # Face id: axis with |coordinate| == half, signed.
        axis = np.argmax(np.abs(pts) / half, axis=1)
        sign = np.take_along_axis(pts, axis[:, None], axis=1)[:, 0] >= 0
        face = axis * 2 + sign.astype(np.int64)
        return pts, face, hit

    def face_coords(self, pts: np.ndarray, face: np.ndarray):
        """Map hit points to per-face (s, t) in [0, 1]."""
        half = self.edge / 2.0
        axis = face // 2
        others = np.array([[1, 2], [0, 2], [0, 1]])[axis]
        s = np.take_along_axis(pts, others[:, :1], axis=1)[:, 0]
        t = np.take_along_axis(pts, others[:, 1:], axis=1)[:, 0]
        return (s + half) / self.edge, (t + half) / self.edge

    def shade(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        pts, face, hit = self.intersect(origins, dirs)
        out = np.full(len(dirs), _CUBE_BACKGROUND / 255.0)
        if np.any(hit):
            s, t = self.face_coords(pts[hit], face[hit])
            out[hit] = self.face_intensity(face[hit], s, t)
        return out


def render_cube_view(scene: CubeScene, intrinsics: CameraIntrinsics,
                     dist: DistortionCoeffs, pose: CameraPose,
                     width: int, height: int, supersample: int = 2) -> np.ndarray:
    """Ray-cast render of the cube, ``supersample`` x ``supersample`` per pixel."""
    ss = supersample
    sub = (np.arange(ss) + 0.5) / ss - 0.5
    u = (np.arange(width)[:, None] + sub[None, :]).ravel()
    origin = pose.center

    image = np.empty((height, width), dtype=np.uint8)
    rows_per_chunk = max(1, 2 ** 19 // (width * ss * ss))
    for row0 in range(0, height, rows_per_chunk):
        row1 = min(row0 + rows_per_chunk, height)
        v = (np.arange(row0, row1)[:, None] + sub[None, :]).ravel()
        uu, vv = np.meshgrid(u, v)
        px = np.column_stack([uu.ravel(), vv.ravel()])
        rays = undistort_normalized(pixel_to_normalized(px, intrinsics), dist)
        dirs_cam = np.column_stack([rays, np.ones(len(rays))])
        dirs_world = dirs_cam @ pose.rotation
        origins = np.broadcast_to(origin, dirs_world.shape)
        shade = scene.shade(origins, dirs_world)
        block = shade.reshape(row1 - row0, ss, width, ss).mean(axis=(1, 3))
        image[row0:row1] = np.clip(np.rint(block * 255.0), 0, 255).astype(np.uint8)
    return image


def sample_ring_poses(n_views: int, radius: float, elevation_deg: float = 18.0,
                      sweep_deg: float = 75.0, start_deg: float = 0.0) -> list[CameraPose]:
    """Cameras on an arc around the origin, all looking at the origin."""
    poses = []
    angles = np.deg2rad(start_deg + np.linspace(0.0, sweep_deg, n_views))
    elev = np.deg2rad(elevation_deg)
    for a in angles:
        center = radius * np.array([
            np.cos(elev) * np.cos(a),
            np.cos(elev) * np.sin(a),
            np.sin(elev),
        ])
        forward = -center / np.linalg.norm(center)
        up_hint = np.array([0.0, 0.0, 1.0])
        right = np.cross(forward, up_hint)
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        rot = np.vstack([right, down, forward])  # world -> camera rows
        poses.append(CameraPose(rot, -rot @ center))
    return poses


def cube_ray_points(scene: CubeScene, pose: CameraPose, pixels: np.ndarray,
                    intrinsics: CameraIntrinsics, dist: DistortionCoeffs):
    """Ground-truth 3D points where pixel rays from ``pose`` hit the cube."""
    rays = undistort_normalized(pixel_to_normalized(pixels, intrinsics), dist)
    dirs_cam = np.column_stack([rays, np.ones(len(rays))])
    dirs_world = dirs_cam @ pose.rotation
    origins = np.broadcast_to(pose.center, dirs_world.shape)
    pts, _, hit = scene.intersect(origins, dirs_world)
    return pts, hit
