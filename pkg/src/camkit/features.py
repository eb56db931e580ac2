"""Scale-space blob features with orientation and a 64-d gradient descriptor.

Interest points are extrema of a difference-of-Gaussians pyramid over three
octaves. Each feature gets a dominant gradient orientation and a descriptor
built from a 4x4 spatial grid of 4-bin gradient-orientation histograms
(64 dimensions, L2-normalized), sampled in a frame rotated to the feature
orientation so matching tolerates in-plane rotation and moderate scale
change.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ImageTooSmall
from .imageops import quadratic_peak_offset, to_float

N_OCTAVES = 3
INTERVALS = 3
SIGMA0 = 1.6
CONTRAST_THRESHOLD = 0.015
EDGE_RATIO = 10.0
DESCRIPTOR_GRID = 4
DESCRIPTOR_BINS = 4
MIN_IMAGE_SIDE = 32


@dataclass(frozen=True)
class Feature:
    """One interest point: position (pixels), scale, orientation, descriptor."""

    position: np.ndarray  # (2,) u, v
    scale: float
    orientation: float  # radians
    descriptor: np.ndarray  # (64,), unit L2 norm
    response: float = 0.0


def _gaussian_pyramid(img: np.ndarray) -> list[list[np.ndarray]]:
    step = 2.0 ** (1.0 / INTERVALS)
    sigmas = [SIGMA0 * step ** i for i in range(INTERVALS + 3)]
    octaves = []
    base = ndimage.gaussian_filter(img, SIGMA0, mode="nearest")
    for _ in range(N_OCTAVES):
        levels = [base]
        for i in range(1, len(sigmas)):
            inc = np.sqrt(sigmas[i] ** 2 - sigmas[i - 1] ** 2)
            levels.append(ndimage.gaussian_filter(levels[-1], inc, mode="nearest"))
        octaves.append(levels)
        base = levels[INTERVALS][::2, ::2]
    return octaves


def _scale_space_extrema(dog: np.ndarray) -> np.ndarray:
    """(level, v, u) indices of 26-neighborhood extrema above threshold."""
    maxf = ndimage.maximum_filter(dog, size=3, mode="nearest")
    minf = ndimage.minimum_filter(dog, size=3, mode="nearest")
    strong = np.abs(dog) > CONTRAST_THRESHOLD
    peaks = ((dog == maxf) | (dog == minf)) & strong
    peaks[0] = peaks[-1] = False
    peaks[:, :2, :] = peaks[:, -2:, :] = False
    peaks[:, :, :2] = peaks[:, :, -2:] = False
    return np.argwhere(peaks)


def _passes_edge_test(slice2d: np.ndarray, v: int, u: int) -> bool:
    dxx = slice2d[v, u + 1] - 2 * slice2d[v, u] + slice2d[v, u - 1]
    dyy = slice2d[v + 1, u] - 2 * slice2d[v, u] + slice2d[v - 1, u]
    dxy = (slice2d[v + 1, u + 1] - slice2d[v + 1, u - 1]
           - slice2d[v - 1, u + 1] + slice2d[v - 1, u - 1]) / 4.0
    det = dxx * dyy - dxy * dxy
    if det <= 0:
        return False
    trace = dxx + dyy
    return trace * trace / det < (EDGE_RATIO + 1.0) ** 2 / EDGE_RATIO


def _dominant_orientation(gx: np.ndarray, gy: np.ndarray,
                          u: float, v: float, sigma: float) -> float:
    h, w = gx.shape
    radius = max(3, int(round(4.0 * sigma)))
    u0, v0 = int(round(u)), int(round(v))
    x0, x1 = max(u0 - radius, 0), min(u0 + radius + 1, w)
    y0, y1 = max(v0 - radius, 0), min(v0 + radius + 1, h)
    px = gx[y0:y1, x0:x1]
    py = gy[y0:y1, x0:x1]
    yy, xx = np.mgrid[y0:y1, x0:x1]
    d2 = (xx - u) ** 2 + (yy - v) ** 2
    weight = np.exp(-d2 / (2.0 * (1.5 * sigma) ** 2))
    mag = np.hypot(px, py) * weight
    ang = np.arctan2(py, px)

    nbins = 36
    bins = np.floor((ang + np.pi) / (2 * np.pi) * nbins).astype(np.int64) % nbins
    hist = np.bincount(bins.ravel(), weights=mag.ravel(), minlength=nbins)
    kernel = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
    for _ in range(2):
        hist = np.convolve(np.concatenate([hist[-2:], hist, hist[:2]]),
                           kernel, mode="valid")[:nbins]
    peak = int(np.argmax(hist))
    left = hist[(peak - 1) % nbins]
    right = hist[(peak + 1) % nbins]
    denom = left - 2 * hist[peak] + right
    shift = 0.0 if abs(denom) < 1e-12 else 0.5 * (left - right) / denom
    theta = (peak + 0.5 + shift) / nbins * 2 * np.pi - np.pi
    return float(theta)


def _descriptor(gx: np.ndarray, gy: np.ndarray, u: float, v: float,
                sigma: float, orientation: float) -> np.ndarray | None:
    grid = DESCRIPTOR_GRID
    nbins = DESCRIPTOR_BINS
    cell = 3.0 * sigma
    half = grid / 2.0
    samples = np.arange(grid * 4)  # 4 samples per cell edge
    coords = (samples + 0.5) / 4.0 - half  # cell units, centered
    sx, sy = np.meshgrid(coords, coords)
    sx = sx.ravel()
    sy = sy.ravel()

    cos_o, sin_o = np.cos(orientation), np.sin(orientation)
    du = cell * (cos_o * sx - sin_o * sy)
    dv = cell * (sin_o * sx + cos_o * sy)
    pu = u + du
    pv = v + dv
    h, w = gx.shape
    if (pu.min() < 1 or pu.max() > w - 2 or pv.min() < 1 or pv.max() > h - 2):
        return None

    u0 = pu.astype(np.int64)
    v0 = pv.astype(np.int64)
    fu = pu - u0
    fv = pv - v0

    def bil(img):
        return (img[v0, u0] * (1 - fu) * (1 - fv)
                + img[v0, u0 + 1] * fu * (1 - fv)
                + img[v0 + 1, u0] * (1 - fu) * fv
                + img[v0 + 1, u0 + 1] * fu * fv)

    gxi = bil(gx)
    gyi = bil(gy)
    mag = np.hypot(gxi, gyi)
    mag *= np.exp(-(sx ** 2 + sy ** 2) / (2.0 * half ** 2))
    ang = np.arctan2(gyi, gxi) - orientation

    cell_i = np.clip(np.floor(sx + half).astype(np.int64), 0, grid - 1)
    cell_j = np.clip(np.floor(sy + half).astype(np.int64), 0, grid - 1)
    obin = (ang + 2 * np.pi) % (2 * np.pi) / (2 * np.pi) * nbins
    b0 = np.floor(obin).astype(np.int64) % nbins
    fb = obin - np.floor(obin)

    desc = np.zeros((grid, grid, nbins))
    np.add.at(desc, (cell_j, cell_i, b0), mag * (1 - fb))
    np.add.at(desc, (cell_j, cell_i, (b0 + 1) % nbins), mag * fb)
    vec = desc.ravel()
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        return None
    return vec / norm


def detect_features(image: np.ndarray, max_features: int = 1000) -> list[Feature]:
    """Detect up to ``max_features`` scale-space features, strongest first.

    Raises ImageTooSmall below 32x32. A featureless (uniform) image yields an
    empty list.
    """
    img = to_float(image)
    if img.shape[0] < MIN_IMAGE_SIDE or img.shape[1] < MIN_IMAGE_SIDE:
        raise ImageTooSmall(f"image {img.shape[1]}x{img.shape[0]} is below "
                            f"{MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}")

    step = 2.0 ** (1.0 / INTERVALS)
    pyramid = _gaussian_pyramid(img)
    found: list[Feature] = []
    for octave, levels in enumerate(pyramid):
        if min(levels[0].shape) < 16:
            break
        dog = np.stack([levels[i + 1] - levels[i] for i in range(len(levels) - 1)])
        gradients = {}
        for li, v, u in _scale_space_extrema(dog):
            if not _passes_edge_test(dog[li], v, u):
                continue
            offset = quadratic_peak_offset(dog[li, v - 1:v + 2, u - 1:u + 2])
            uo = u + offset[0]
            vo = v + offset[1]
            sigma_oct = SIGMA0 * step ** li
            if li not in gradients:
                gl = levels[li]
                gradients[li] = (
                    ndimage.sobel(gl, axis=1, mode="nearest") / 8.0,
                    ndimage.sobel(gl, axis=0, mode="nearest") / 8.0,
                )
            gx, gy = gradients[li]
            theta = _dominant_orientation(gx, gy, uo, vo, sigma_oct)
            desc = _descriptor(gx, gy, uo, vo, sigma_oct, theta)
            if desc is None:
                continue
            found.append(Feature(
                position=np.array([uo, vo]) * (2 ** octave),
                scale=sigma_oct * (2 ** octave),
                orientation=theta,
                descriptor=desc,
                response=float(abs(dog[li, v, u])),
            ))

    found.sort(key=lambda f: (-f.response, f.position[1], f.position[0]))
    return found[:max_features]


def match_features(a: list[Feature], b: list[Feature],
                   ratio: float = 0.8) -> np.ndarray:
    """Mutual-nearest-neighbor descriptor matching with a ratio test.

    Returns an (m, 2) array of (index in a, index in b) pairs, sorted by the
    first index. A pair is kept only when each side is the other's nearest
    neighbor and passes the nearest/second-nearest ratio test, which makes
    the result symmetric in ``a`` and ``b``.
    """
    if not a or not b:
        return np.empty((0, 2), dtype=np.int64)
    da = np.stack([f.descriptor for f in a])
    db = np.stack([f.descriptor for f in b])
    d2 = np.maximum(
        np.sum(da * da, axis=1)[:, None]
        + np.sum(db * db, axis=1)[None, :]
        - 2.0 * (da @ db.T),
        0.0,
    )

    def nearest_two(dist):
        order = np.argsort(dist, axis=1)
        j1 = order[:, 0]
        d1 = np.sqrt(dist[np.arange(len(dist)), j1])
        if dist.shape[1] > 1:
            d2nd = np.sqrt(dist[np.arange(len(dist)), order[:, 1]])
        else:
            d2nd = np.full(len(dist), np.inf)
        return j1, d1, d2nd

    fwd, d1a, d2a = nearest_two(d2)
    bwd, d1b, d2b = nearest_two(d2.T)

    pairs = []
    for i, j in enumerate(fwd):
        if bwd[j] != i:
            continue
        ok_a = d1a[i] < ratio * d2a[i] if np.isfinite(d2a[i]) else True
        ok_b = d1b[j] < ratio * d2b[j] if np.isfinite(d2b[j]) else True
        if ok_a and ok_b:
            pairs.append((i, int(j)))
    return np.array(pairs, dtype=np.int64) if pairs else np.empty((0, 2), dtype=np.int64)
