"""Small-rotation camera model, depth-based backward warping and induced flow.

Convention: a pose describes the motion of the camera itself. A point X in
the reference (mid-exposure) camera frame is seen by the moved camera at

    X' = R^T (X - v),   R = I + [theta]_x,

so a camera translating by +vx makes the scene slide by -fx*vx/Z pixels.
Warping is target driven: output pixel x reads the source image at the
position x + F(x), where F is the induced flow computed with the depth of x.
"""
from __future__ import annotations

import numpy as np

from .types import AngleTooLarge, DepthMap, DimensionMismatch, FlowField, Intrinsics, MAX_ROTATION, Pose6


def small_rotation(theta) -> np.ndarray:
    """First-order rotation matrix I + [theta]_x (not orthonormalized)."""
    tx, ty, tz = (float(t) for t in theta)
    if np.sqrt(tx * tx + ty * ty + tz * tz) > MAX_ROTATION:
        raise AngleTooLarge(f"|theta| exceeds {MAX_ROTATION} rad")
    return np.array([[1.0, -tz, ty],
                     [tz, 1.0, -tx],
                     [-ty, tx, 1.0]])


def pose_at_time(p: Pose6, t: float) -> Pose6:
    """Pose along the linear trajectory at normalized time t in [-1, 1]; endpoints are -p/2 and +p/2."""
    if not -1.0 <= t <= 1.0:
        raise ValueError(f"normalized time must lie in [-1, 1], got {t}")
    return p.scaled(t / 2.0)


def sample_times(n_half: int) -> np.ndarray:
    """The 2N+1 uniformly spaced normalized exposure times n/N, n = -N..N."""
    n = np.arange(-n_half, n_half + 1)
    return n / n_half


def _check_inputs(p: Pose6, depth: DepthMap, K: Intrinsics) -> None:
    p.check_small()
    h, w = depth.shape
    if h < 2 or w < 2:
        raise DimensionMismatch("warping needs at least a 2x2 grid")


def source_coords(p: Pose6, depth: DepthMap, K: Intrinsics):
    """Where each target pixel samples the source image.

    Returns (u, v, ok) arrays of shape (H, W). ``ok`` is False where the
    target depth is invalid or the moved point falls behind the camera; the
    coordinates there are set to the pixel itself. At the zero pose the
    returned coordinates equal the pixel grid exactly.
    """
    us, vs, ok = source_coords_stack([p], depth, K)
    return us[0], vs[0], ok[0]


def source_coords_stack(poses, depth: DepthMap, K: Intrinsics):
    """``source_coords`` for several poses at once; arrays of shape (S, H, W)."""
    for p in poses:
        _check_inputs(p, depth, K)
    h, w = depth.shape
    u = np.arange(w, dtype=np.float64)[None, :]
    v = np.arange(h, dtype=np.float64)[:, None]
    a = (u - K.cx) / K.fx
    b = (v - K.cy) / K.fy
    Z = depth.data
    X = a * Z
    Y = b * Z
    # rows of R^T for every pose, shape (S, 3, 3) -> broadcast over the grid
    Rt = np.stack([small_rotation(p.theta).T for p in poses])[:, :, :, None, None]
    tv = np.array([p.v for p in poses])[:, :, None, None]
    Px, Py, Pz = X - tv[:, 0], Y - tv[:, 1], Z - tv[:, 2]
    Xn = Rt[:, 0, 0] * Px + Rt[:, 0, 1] * Py + Rt[:, 0, 2] * Pz
    Yn = Rt[:, 1, 0] * Px + Rt[:, 1, 1] * Py + Rt[:, 1, 2] * Pz
    Zn = Rt[:, 2, 0] * Px + Rt[:, 2, 1] * Py + Rt[:, 2, 2] * Pz
    ok = depth.valid & (Zn > 1e-6 * np.where(depth.valid, Z, 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        # written as a difference so the zero pose gives exactly zero displacement
        du = K.fx * (Xn - a * Zn) / Zn
        dv = K.fy * (Yn - b * Zn) / Zn
    ok &= np.isfinite(du) & np.isfinite(dv)
    du = np.where(ok, du, 0.0)
    dv = np.where(ok, dv, 0.0)
    return u + du, v + dv, ok


def bilinear_stencil(us: np.ndarray, vs: np.ndarray, height: int, width: int):
    """Flat source indices and bilinear weights for sample positions.

    ``us``/``vs`` may have any shape S. Returns ``idx`` and ``wts`` of shape
    S + (4,) and a boolean ``inside`` of shape S. Positions outside
    [0, W-1] x [0, H-1] are clamped for indexing and flagged in ``inside``.
    Weights are non-negative and sum to one everywhere.
    """
    inside = (us >= 0) & (us <= width - 1) & (vs >= 0) & (vs <= height - 1)
    uc = np.clip(us, 0.0, width - 1)
    vc = np.clip(vs, 0.0, height - 1)
    x0 = np.minimum(np.floor(uc).astype(np.int64), width - 2)
    y0 = np.minimum(np.floor(vc).astype(np.int64), height - 2)
    fx = uc - x0
    fy = vc - y0
    i00 = y0 * width + x0
    idx = np.stack([i00, i00 + 1, i00 + width, i00 + width + 1], axis=-1)
    wts = np.stack([(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy], axis=-1)
    return idx, wts, inside


def _footprint_ok(idx, wts, inside, depth: DepthMap) -> np.ndarray:
    dv = depth.valid.ravel()
    hits_invalid = ((wts > 0) & ~dv[idx]).any(axis=-1)
    return inside & ~hits_invalid


def warp(p: Pose6, depth: DepthMap, image: np.ndarray, K: Intrinsics):
    """Backward-warp ``image`` by pose ``p`` using ``depth``.

    Returns (warped, mask). The mask is False where the sample leaves the
    image, the depth is invalid or the bilinear footprint touches an
    invalid-depth pixel; warped values there are still defined (clamped
    sampling) but carry no meaning.
    """
    img = np.asarray(image, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    h, w = depth.shape
    if img.shape[:2] != (h, w):
        raise DimensionMismatch(f"image {img.shape[:2]} vs depth {(h, w)}")
    us, vs, ok = source_coords(p, depth, K)
    idx, wts, inside = bilinear_stencil(us, vs, h, w)
    flat = img.reshape(h * w, -1)
    out = np.zeros_like(flat)
    # fixed summation order keeps the zero pose bit-exact (1*a + 0*b + ...)
    idx = idx.reshape(-1, 4)
    wk = wts.reshape(-1, 4)
    for k in range(4):
        out += wk[:, k, None] * flat[idx[:, k]]
    mask = ok & _footprint_ok(idx.reshape(h, w, 4), wts, inside, depth)
    out = out.reshape(img.shape)
    return (out[:, :, 0] if squeeze else out), mask


def induced_flow(p: Pose6, depth: DepthMap, K: Intrinsics) -> FlowField:
    """Flow F(p)(x) = project(transform(backproject(x, D(x)))) - x."""
    us, vs, ok = source_coords(p, depth, K)
    h, w = depth.shape
    u = np.arange(w, dtype=np.float64)[None, :]
    v = np.arange(h, dtype=np.float64)[:, None]
    return FlowField(np.stack([us - u, vs - v], axis=2), ok)
