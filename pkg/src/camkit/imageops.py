"""Small shared raster helpers."""

from __future__ import annotations

import numpy as np

# Pseudo-inverse of the quadratic design [x^2, y^2, xy, x, y, 1] on the 3x3
# offset stencil, computed once at import.
_STENCIL = np.array([(dx, dy) for dy in (-1, 0, 1) for dx in (-1, 0, 1)], dtype=float)
_QUAD_PINV = np.linalg.pinv(np.column_stack([
    _STENCIL[:, 0] ** 2,
    _STENCIL[:, 1] ** 2,
    _STENCIL[:, 0] * _STENCIL[:, 1],
    _STENCIL[:, 0],
    _STENCIL[:, 1],
    np.ones(9),
]))


def quadratic_peak_offset(patch: np.ndarray) -> np.ndarray:
    """Subpixel offset of the extremum of a 3x3 patch's LSQ quadratic fit.

    The offset is clamped to [-1, 1] per axis; a singular fit returns (0, 0).
    """
    a, b, c, d, e, _ = _QUAD_PINV @ np.asarray(patch, dtype=np.float64).ravel()
    hess = np.array([[2 * a, c], [c, 2 * b]])
    if abs(np.linalg.det(hess)) < 1e-18:
        return np.zeros(2)
    return np.clip(np.linalg.solve(hess, [-d, -e]), -1.0, 1.0)


def to_float(image: np.ndarray) -> np.ndarray:
    """uint8 image to float64 in [0, 1]; float input passes through."""
    img = np.asarray(image)
    if img.dtype == np.uint8:
        return img.astype(np.float64) / 255.0
    return img.astype(np.float64)


def bilinear_sample(image: np.ndarray, points, fill: float = 0.0) -> np.ndarray:
    """Sample a float image at (u, v) positions with bilinear interpolation.

    Points outside ``[0, w-1] x [0, h-1]`` return ``fill``. ``points`` has
    shape (n, 2) with u along columns, v along rows.
    """
    img = np.asarray(image, dtype=np.float64)
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    h, w = img.shape
    u, v = pts[:, 0], pts[:, 1]

    inside = (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
    uc = np.clip(u, 0, w - 1)
    vc = np.clip(v, 0, h - 1)
    u0 = np.clip(np.floor(uc).astype(np.int64), 0, w - 2) if w > 1 else np.zeros(len(uc), np.int64)
    v0 = np.clip(np.floor(vc).astype(np.int64), 0, h - 2) if h > 1 else np.zeros(len(vc), np.int64)
    fu = uc - u0
    fv = vc - v0

    i00 = img[v0, u0]
    i01 = img[v0, np.minimum(u0 + 1, w - 1)]
    i10 = img[np.minimum(v0 + 1, h - 1), u0]
    i11 = img[np.minimum(v0 + 1, h - 1), np.minimum(u0 + 1, w - 1)]
    out = (i00 * (1 - fu) * (1 - fv) + i01 * fu * (1 - fv)
           + i10 * (1 - fu) * fv + i11 * fu * fv)
    return np.where(inside, out, fill)
