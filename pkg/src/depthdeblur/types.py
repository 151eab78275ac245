"""Shared value types: images, depth maps, poses, intrinsics, parameters.

Images are plain float64 arrays of shape (H, W, C) with C in {1, 3};
``as_image`` is the validating constructor. Everything else is a frozen
dataclass that checks its invariants on construction.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Any, Mapping

import numpy as np

MAX_ROTATION = 0.5  # rad; first-order rotation model is rejected beyond this


class DeblurError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(DeblurError):
    pass


class NonPositiveDepth(DeblurError):
    pass


class AngleTooLarge(DeblurError):
    pass


class ImageTooSmall(DeblurError):
    pass


class InvalidParameter(DeblurError, ValueError):
    pass


class CGBreakdown(DeblurError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def as_image(data, clamp: bool = False) -> np.ndarray:
    """Validate ``data`` as an image and return a read-only float64 (H, W, C) copy.

    2-D input is promoted to a single channel. With ``clamp=True`` values are
    clipped into [0, 1] (used only at I/O boundaries); otherwise out-of-range
    or non-finite values raise.
    """
    a = np.array(data, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3 or a.shape[2] not in (1, 3):
        raise DimensionMismatch(f"image must be HxW, HxWx1 or HxWx3, got {a.shape}")
    if a.shape[0] < 2 or a.shape[1] < 2:
        raise ImageTooSmall(f"image must be at least 2x2, got {a.shape[:2]}")
    if not np.all(np.isfinite(a)):
        raise InvalidParameter("image contains non-finite values")
    if clamp:
        np.clip(a, 0.0, 1.0, out=a)
    elif a.min() < 0.0 or a.max() > 1.0:
        raise InvalidParameter("image intensities must lie in [0, 1]")
    return _frozen(a)


def to_gray(image: np.ndarray) -> np.ndarray:
    """Channel mean, kept as a single-channel (H, W, 1) array."""
    return image.mean(axis=2, keepdims=True)


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Metric depth (meters) with a per-pixel validity mask.

    If ``valid`` is omitted, pixels with finite positive depth are valid.
    A pixel explicitly marked valid must hold a finite positive depth.
    """

    data: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        d = np.array(self.data, dtype=np.float64)
        if d.ndim != 2:
            raise DimensionMismatch(f"depth must be 2-D, got shape {d.shape}")
        if self.valid is None:
            with np.errstate(invalid="ignore"):
                m = np.isfinite(d) & (d > 0)
        else:
            m = np.array(self.valid, dtype=bool)
            if m.shape != d.shape:
                raise DimensionMismatch("depth and validity mask differ in shape")
            with np.errstate(invalid="ignore"):
                bad = m & ~(np.isfinite(d) & (d > 0))
            if bad.any():
                raise NonPositiveDepth(f"{int(bad.sum())} valid pixels have non-positive or non-finite depth")
        d[~m] = 0.0
        object.__setattr__(self, "data", _frozen(d))
        object.__setattr__(self, "valid", _frozen(m))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def scale(self) -> float:
        """Median valid depth, the natural length unit of the scene."""
        if not self.valid.any():
            return 1.0
        return float(np.median(self.data[self.valid]))

    def normalized(self) -> np.ndarray:
        """Depth mapped to [0, 1] by the valid depth range (zero where invalid or flat)."""
        out = np.zeros_like(self.data)
        if not self.valid.any():
            return out
        lo, hi = self.data[self.valid].min(), self.data[self.valid].max()
        if hi > lo:
            out[self.valid] = (self.data[self.valid] - lo) / (hi - lo)
        return out


@dataclass(frozen=True)
class Pose6:
    """Total exposure motion: rotation (rad) and translation (m)."""

    theta: tuple[float, float, float] = (0.0, 0.0, 0.0)
    v: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        th = tuple(float(x) for x in self.theta)
        tv = tuple(float(x) for x in self.v)
        if len(th) != 3 or len(tv) != 3:
            raise InvalidParameter("pose needs three rotation and three translation components")
        if not all(np.isfinite(th + tv)):
            raise InvalidParameter("pose components must be finite")
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "v", tv)

    @classmethod
    def from_vector(cls, p) -> "Pose6":
        p = np.asarray(p, dtype=np.float64).ravel()
        if p.size != 6:
            raise InvalidParameter(f"pose vector must have 6 entries, got {p.size}")
        return cls(tuple(p[:3]), tuple(p[3:]))

    @classmethod
    def zero(cls) -> "Pose6":
        return cls()

    def as_vector(self) -> np.ndarray:
        return np.array(self.theta + self.v)

    def scaled(self, s: float) -> "Pose6":
        return Pose6.from_vector(s * self.as_vector())

    def __neg__(self) -> "Pose6":
        return self.scaled(-1.0)

    @property
    def rotation_norm(self) -> float:
        return float(np.linalg.norm(self.theta))

    def check_small(self) -> None:
        if self.rotation_norm > MAX_ROTATION:
            raise AngleTooLarge(f"|theta| = {self.rotation_norm:.4f} rad exceeds {MAX_ROTATION}")


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole camera: focal lengths and principal point, in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        vals = (self.fx, self.fy, self.cx, self.cy)
        if not all(np.isfinite(vals)):
            raise InvalidParameter("intrinsics must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidParameter("focal lengths must be positive")

    def check_bounds(self, height: int, width: int) -> None:
        if not (0 <= self.cx < width and 0 <= self.cy < height):
            raise InvalidParameter(
                f"principal point ({self.cx}, {self.cy}) outside a {width}x{height} image")

    def scaled(self, s: float) -> "Intrinsics":
        """Intrinsics of the same camera resampled by factor ``s`` (pixel-center convention)."""
        return Intrinsics(self.fx * s, self.fy * s, (self.cx + 0.5) * s - 0.5, (self.cy + 0.5) * s - 0.5)

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @classmethod
    def default_for(cls, height: int, width: int) -> "Intrinsics":
        """A roughly 74 degree horizontal field of view, centered principal point."""
        f = 2.0 * width / 3.0
        return cls(f, f, (width - 1) / 2.0, (height - 1) / 2.0)


@dataclass(frozen=True, eq=False)
class FlowField:
    """Per-pixel displacement (du, dv) in pixels, shape (H, W, 2)."""

    data: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        f = np.array(self.data, dtype=np.float64)
        if f.ndim != 3 or f.shape[2] != 2:
            raise DimensionMismatch(f"flow must be HxWx2, got {f.shape}")
        m = np.isfinite(f).all(axis=2) if self.valid is None else np.array(self.valid, dtype=bool)
        if m.shape != f.shape[:2]:
            raise DimensionMismatch("flow and validity mask differ in shape")
        if not np.isfinite(f[m]).all():
            raise InvalidParameter("valid flow vectors must be finite")
        f[~m] = 0.0
        object.__setattr__(self, "data", _frozen(f))
        object.__setattr__(self, "valid", _frozen(m))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]


@dataclass(frozen=True)
class EnergyParams:
    mu1: float = -20.0
    mu2: float = 0.2
    mu3: float = 0.2
    mu4: float = 0.05
    sigma_b: float = 0.01
    sigma_d: float = 0.02
    n_half: int = 10  # 2N+1 = 21 time samples
    eta: float = 10.0
    gamma: float = 0.2  # dual step; gamma * eta * mu4 * 8 < 1 keeps the primal-dual iteration stable
    pyramid_levels: int = 11
    pyramid_scale: float = 0.9

    def __post_init__(self):
        if not self.mu1 < 0:
            raise InvalidParameter("mu1 must be negative")
        for name in ("mu2", "mu3", "mu4", "sigma_b", "sigma_d", "eta", "gamma"):
            if not getattr(self, name) > 0:
                raise InvalidParameter(f"{name} must be positive")
        if int(self.n_half) != self.n_half or self.n_half < 1:
            raise InvalidParameter("n_half must be an integer >= 1")
        if int(self.pyramid_levels) != self.pyramid_levels or self.pyramid_levels < 1:
            raise InvalidParameter("pyramid_levels must be an integer >= 1")
        if not 0 < self.pyramid_scale < 1:
            raise InvalidParameter("pyramid_scale must lie in (0, 1)")


@dataclass(frozen=True)
class SolverOptions:
    """Iteration budgets and bounds for the alternating solver."""

    alternations: int = 3
    latent_iters: int = 50  # per pyramid level, shared by its alternations
    cg_tol: float = 1e-6
    cg_maxiter: int = 200
    lm_max_iter: int = 50
    theta_bound: float = 0.3
    sigma_t: float = 0.05
    trans_bound_factor: float = 10.0
    n_starts: int = 9
    workers: int = 1

    def __post_init__(self):
        for name in ("alternations", "latent_iters", "cg_maxiter", "lm_max_iter", "n_starts", "workers"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                raise InvalidParameter(f"{name} must be a positive integer")
        for name in ("cg_tol", "theta_bound", "sigma_t", "trans_bound_factor"):
            if not getattr(self, name) > 0:
                raise InvalidParameter(f"{name} must be positive")
        if self.theta_bound > MAX_ROTATION:
            raise InvalidParameter(f"theta_bound may not exceed {MAX_ROTATION}")

    @property
    def trans_bound(self) -> float:
        return self.trans_bound_factor * self.sigma_t


def params_from_mapping(cfg: Mapping[str, Any], energy: EnergyParams | None = None,
                        solver: SolverOptions | None = None) -> tuple[EnergyParams, SolverOptions]:
    """Overlay a flat ``{field: value}`` mapping onto EnergyParams / SolverOptions."""
    energy = energy or EnergyParams()
    solver = solver or SolverOptions()
    e_names = {f.name for f in fields(EnergyParams)}
    s_names = {f.name for f in fields(SolverOptions)}
    unknown = set(cfg) - e_names - s_names
    if unknown:
        raise InvalidParameter(f"unknown configuration keys: {sorted(unknown)}")
    energy = replace(energy, **{k: v for k, v in cfg.items() if k in e_names})
    solver = replace(solver, **{k: v for k, v in cfg.items() if k in s_names})
    return energy, solver


def validate_pair(image: np.ndarray, depth: DepthMap) -> None:
    """Raise unless ``image`` and ``depth`` form a well-formed pair."""
    if not isinstance(depth, DepthMap):
        raise InvalidParameter("depth must be a DepthMap")
    if tuple(image.shape[:2]) != tuple(depth.shape):
        raise DimensionMismatch(f"image {image.shape[:2]} vs depth {depth.shape}")
    with np.errstate(invalid="ignore"):
        bad = depth.valid & ~(np.isfinite(depth.data) & (depth.data > 0))
    if bad.any():
        raise NonPositiveDepth("depth map has non-positive valid entries")
