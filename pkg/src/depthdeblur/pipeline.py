"""Coarse-to-fine alternation between the pose step and the image step."""
from __future__ import annotations

import logging
import dataclasses
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .blur import BlurOperator
from .energy import edge_weights, total_energy
from .geometry import induced_flow, pose_at_time, warp
from .latent import LatentSolveReport, solve_latent
from .pose import PoseSolveReport, solve_pose
from .types import (DeblurError, DepthMap, EnergyParams, FlowField, ImageTooSmall, Intrinsics,
                    InvalidParameter, Pose6, SolverOptions, as_image, to_gray, validate_pair)

log = logging.getLogger(__name__)

MIN_LEVEL_SIZE = 16


@dataclass(frozen=True, eq=False)
class PyramidLevel:
    image: np.ndarray
    depth: DepthMap
    intrinsics: Intrinsics
    scale: float  # relative to level 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape


@dataclass(frozen=True, eq=False)
class Pyramid:
    levels: list[PyramidLevel]  # finest first
    scale: float

    def __len__(self) -> int:
        return len(self.levels)


@dataclass
class LevelReport:
    level: int
    shape: tuple[int, int]
    energies: list[float] = field(default_factory=list)  # total energy after each accepted step
    pose_reports: list[PoseSolveReport] = field(default_factory=list)
    latent_reports: list[LatentSolveReport] = field(default_factory=list)
    pose_rejections: int = 0


@dataclass
class DeblurResult:
    latent: np.ndarray
    pose: Pose6
    levels: list[LevelReport]
    flow: FlowField
    wall_time: float
    converged: bool = True
    message: str = ""
    start_energies: list[float] = field(default_factory=list)  # coarsest-level multi-start results


def _resample(a: np.ndarray, shape: tuple[int, int], s: float, order: int = 1) -> np.ndarray:
    """Sample ``a`` on a grid ``s`` times as dense, pixel centers aligned."""
    h, w = shape
    y = (np.arange(h) + 0.5) / s - 0.5
    x = (np.arange(w) + 0.5) / s - 0.5
    yy, xx = np.meshgrid(y, x, indexing="ij")
    coords = np.stack([yy, xx])
    if a.ndim == 2:
        return ndimage.map_coordinates(a, coords, order=order, mode="nearest")
    return np.stack([ndimage.map_coordinates(a[:, :, c], coords, order=order, mode="nearest")
                     for c in range(a.shape[2])], axis=-1)


def _downsample_depth(D: DepthMap, shape: tuple[int, int], s: float) -> DepthMap:
    """Median of the valid source depths in each target pixel's footprint."""
    h, w = shape
    H, W = D.shape
    half = 0.5 / s
    taps = np.arange(-int(np.ceil(half)), int(np.ceil(half)) + 1)
    cy = (np.arange(h) + 0.5) / s - 0.5
    cx = (np.arange(w) + 0.5) / s - 0.5
    ry = np.rint(cy)[:, None] + taps[None, :]  # (h, T)
    rx = np.rint(cx)[:, None] + taps[None, :]
    in_y = (np.abs(ry - cy[:, None]) <= half + 0.5) & (ry >= 0) & (ry < H)
    in_x = (np.abs(rx - cx[:, None]) <= half + 0.5) & (rx >= 0) & (rx < W)
    yi = np.clip(ry, 0, H - 1).astype(int)
    xi = np.clip(rx, 0, W - 1).astype(int)
    vals = D.data[yi[:, None, :, None], xi[None, :, None, :]]  # (h, w, T, T)
    ok = D.valid[yi[:, None, :, None], xi[None, :, None, :]]
    ok &= in_y[:, None, :, None] & in_x[None, :, None, :]
    vals = np.where(ok, vals, np.nan).reshape(h, w, -1)
    valid = ok.reshape(h, w, -1).any(axis=-1)
    out = np.zeros((h, w))
    out[valid] = np.nanmedian(vals[valid], axis=-1)
    return DepthMap(out, valid)


def build_pyramid(B, D: DepthMap, K: Intrinsics, levels: int = 11, scale: float = 0.9) -> Pyramid:
    """Image/depth/intrinsics pyramid, finest level first.

    Level k has dimensions floor(scale * previous) and is resampled from
    the original at the exact factor scale**k: images after a Gaussian
    prefilter, depth by footprint median. Levels that would fall below
    16x16 are dropped.
    """
    B = as_image(B)
    validate_pair(B, D)
    if levels < 1 or not 0 < scale < 1:
        raise InvalidParameter("levels >= 1 and scale in (0, 1) required")
    H, W = D.shape
    if min(H, W) < MIN_LEVEL_SIZE:
        raise ImageTooSmall(f"{H}x{W} is below {MIN_LEVEL_SIZE}x{MIN_LEVEL_SIZE}")
    out = [PyramidLevel(B, D, K, 1.0)]
    h, w = H, W
    for k in range(1, levels):
        h, w = int(np.floor(scale * h)), int(np.floor(scale * w))
        if min(h, w) < MIN_LEVEL_SIZE:
            log.info("pyramid truncated to %d levels", k)
            break
        s = scale ** k
        sigma = (1.0 / s - 1.0) / 2.0
        blurred = ndimage.gaussian_filter(np.asarray(B), sigma=(sigma, sigma, 0), mode="nearest")
        img = as_image(_resample(blurred, (h, w), s), clamp=True)
        out.append(PyramidLevel(img, _downsample_depth(D, (h, w), s), K.scaled(s), s))
    return Pyramid(out, scale)


def upscale(L: np.ndarray, shape: tuple[int, int], ratio: float) -> np.ndarray:
    """Bilinear upsampling of a coarse latent image by ``1/ratio`` onto ``shape``."""
    return np.clip(_resample(np.asarray(L, dtype=np.float64), shape, 1.0 / ratio), 0.0, 1.0)


def shock_filter(B, iterations: int = 1, dt: float = 0.25, sigma: float = 1.0) -> np.ndarray:
    """Osher-Rudin shock filter: steepens blurred edges into steps.

    Each step moves intensities against the sign of the smoothed
    Laplacian at a rate set by the gradient magnitude.
    """
    I = np.array(B, dtype=np.float64)
    for _ in range(iterations):
        for c in range(I.shape[2]):
            ch = I[:, :, c]
            lap = ndimage.gaussian_laplace(ch, sigma, mode="nearest")
            gy, gx = np.gradient(ch)
            ch -= dt * np.sign(lap) * np.hypot(gx, gy)
        np.clip(I, 0.0, 1.0, out=I)
    return I


def blur_extent(B) -> float:
    """Rough blur length in pixels from the autocorrelation width of |grad B|.

    Walks each of four axes of the normalized autocorrelation until it
    drops below one half, takes the longest such lag and subtracts the
    one-pixel width a sharp edge already has.
    """
    g = to_gray(np.asarray(B, dtype=np.float64))[:, :, 0]
    gy, gx = np.gradient(g)
    m = np.hypot(gx, gy)
    m = m - m.mean()
    power = float((m ** 2).sum())
    if power <= 1e-12 * m.size:
        return 0.0
    h, w = m.shape
    F = np.fft.rfft2(m, s=(2 * h, 2 * w))
    ac = np.fft.irfft2(np.abs(F) ** 2, s=(2 * h, 2 * w)) / power
    ac = np.fft.fftshift(ac)
    c0, c1 = h, w
    longest = 0.0
    reach = min(h, w) // 2
    for dy, dx in ((0, 1), (1, 0), (1, 1), (1, -1)):
        step = np.hypot(dy, dx)
        for k in range(1, reach):
            if ac[c0 + k * dy, c1 + k * dx] < 0.5:
                longest = max(longest, k * step)
                break
        else:
            longest = max(longest, reach * step)
    return max(longest - 1.0, 0.0)


def initialize_pose(B, D: DepthMap, K: Intrinsics, params: EnergyParams,
                    options: SolverOptions | None = None) -> list[Pose6]:
    """Multi-start candidates: the zero pose and poses fanned over compass directions.

    Pitch and yaw are combined so that the mean induced flow points in
    each of ``n_starts - 1`` evenly spaced directions with length equal to
    the estimated blur extent. Candidates are clipped into the feasible box.
    """
    options = options or SolverOptions()
    extent = blur_extent(B)
    cands = [Pose6.zero()]
    n_dir = options.n_starts - 1
    if n_dir == 0:
        return cands
    eps = 1e-3
    J = np.empty((2, 2))
    for j in range(2):
        th = np.zeros(3)
        th[j] = eps
        f = induced_flow(Pose6(tuple(th), (0.0, 0.0, 0.0)), D, K)
        J[:, j] = f.data[f.valid].mean(axis=0) / eps
    Jinv = np.linalg.inv(J)
    for k in range(n_dir):
        ang = 2 * np.pi * k / n_dir
        th2 = Jinv @ (extent * np.array([np.cos(ang), np.sin(ang)]))
        th2 = np.clip(th2, -options.theta_bound, options.theta_bound)
        cands.append(Pose6((float(th2[0]), float(th2[1]), 0.0), (0.0, 0.0, 0.0)))
    return cands


def level_params(params: EnergyParams, scale: float) -> EnergyParams:
    """Energy weights for a level resampled by ``scale``.

    The data term sums over pixels while mu1 |p|^2 and the averaged flow
    smoothness do not, so mu1, mu2 and mu3 shrink with the pixel count
    (scale**2) to keep every level balanced like the full-resolution energy.
    """
    s2 = scale ** 2
    return dataclasses.replace(params, mu1=params.mu1 * s2, mu2=params.mu2 * s2, mu3=params.mu3 * s2)


def _level_energy(L, lvl: PyramidLevel, p: Pose6, params: EnergyParams, weights) -> float:
    return total_energy(L, lvl.image, p, lvl.depth, lvl.intrinsics, params, weights=weights)


def _split_budget(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def deblur(B, D: DepthMap, K: Intrinsics, params: EnergyParams | None = None,
           options: SolverOptions | None = None, p_init: Pose6 | None = None,
           fix_pose: bool = False) -> DeblurResult:
    """Estimate the camera motion and the sharp image from ``B`` and ``D``.

    Pose steps fit the blur to a shock-filtered copy of the current
    latent image, whose restored edges carry the motion signal that the
    smooth latent lacks. At the coarsest level this runs from every
    multi-start candidate (or from ``p_init`` only, when given), keeping
    the lowest energy; the latent itself starts from B. Each level then
    alternates pose and image steps; a new pose is kept only when it does
    not raise the color total energy of the actual latent, so every
    level's energy trace is non-increasing. The latent-iteration budget is shared by a level's
    alternations, with the TV dual carried between them.

    With ``fix_pose`` the pose solver is skipped and ``p_init`` is used at
    every level (non-blind deblurring).
    """
    params = params or EnergyParams()
    options = options or SolverOptions()
    t0 = time.perf_counter()
    B = as_image(B)
    validate_pair(B, D)
    K.check_bounds(*D.shape)
    channels = B.shape[2]
    if fix_pose and p_init is None:
        raise InvalidParameter("fix_pose needs p_init")
    pyr = build_pyramid(B, D, K, params.pyramid_levels, params.pyramid_scale)

    def pose_step(L, lvl, lp, weights, p0):
        return solve_pose(to_gray(shock_filter(L)), to_gray(lvl.image), lvl.depth, lvl.intrinsics, p0, lp,
                          options, weights, data_weight=channels)

    coarse = pyr.levels[-1]
    lp = level_params(params, coarse.scale)
    L = np.array(coarse.image)
    weights = edge_weights(coarse.image, coarse.depth, lp)

    def start(c: Pose6):
        p, rep = pose_step(L, coarse, lp, weights, c)
        return p, rep, _level_energy(shock_filter(L), coarse, p, lp, weights)

    if fix_pose:
        runs = [(p_init, None, _level_energy(L, coarse, p_init, lp, weights))]
    else:
        cands = [p_init] if p_init is not None else initialize_pose(
            coarse.image, coarse.depth, coarse.intrinsics, lp, options)
        if options.workers > 1 and len(cands) > 1:
            with ThreadPoolExecutor(options.workers) as pool:
                runs = list(pool.map(start, cands))
        else:
            runs = [start(c) for c in cands]
    best = min(range(len(runs)), key=lambda i: runs[i][2])
    p, start_report = runs[best][0], runs[best][1]

    reports: list[LevelReport] = []
    converged, message = True, ""
    budgets = _split_budget(options.latent_iters, options.alternations)
    for k in range(len(pyr) - 1, -1, -1):
        lvl = pyr.levels[k]
        if k != len(pyr) - 1:
            L = upscale(L, lvl.shape, pyr.scale)
            lp = level_params(params, lvl.scale)
            weights = edge_weights(lvl.image, lvl.depth, lp)
        rep = LevelReport(k, lvl.shape)
        E = _level_energy(L, lvl, p, lp, weights)
        rep.energies.append(E)
        q = None
        for a in range(options.alternations):
            if fix_pose:
                pass
            elif k == len(pyr) - 1 and a == 0:
                rep.pose_reports.append(start_report)
            else:
                p_new, prep = pose_step(L, lvl, lp, weights, p)
                rep.pose_reports.append(prep)
                if p_new != p:
                    E_new = _level_energy(L, lvl, p_new, lp, weights)
                    if E_new <= E:
                        p, E = p_new, E_new
                        rep.energies.append(E)
                    else:
                        rep.pose_rejections += 1
            op = BlurOperator.build(p, lvl.depth, lvl.intrinsics, params.n_half)
            L, lrep = solve_latent(lvl.image, op, L, lp, options, budgets[a], q)
            q = lrep.dual
            rep.latent_reports.append(lrep)
            if not lrep.converged:
                converged, message = False, f"level {k}: {lrep.message}"
            E = _level_energy(L, lvl, p, lp, weights)
            rep.energies.append(E)
        log.info("level %d %s: E %.6g -> %.6g, p=%s", k, lvl.shape, rep.energies[0], E, p.as_vector())
        reports.append(rep)
        if not converged:
            break
    if L.shape != B.shape:
        raise DeblurError("solver aborted before reaching full resolution")
    return DeblurResult(as_image(L, clamp=True), p, reports, induced_flow(p, D, K),
                        time.perf_counter() - t0, converged, message, [r[2] for r in runs])


def frame_times(frames: int) -> np.ndarray:
    """``frames`` instants evenly spanning [-1, 1]; 2N+1 frames hit the blur samples exactly."""
    if frames < 2:
        raise InvalidParameter("frames must be >= 2")
    return (2 * np.arange(frames) - (frames - 1)) / (frames - 1)


def render_sequence(result: DeblurResult | tuple, D: DepthMap, K: Intrinsics, frames: int) -> list[np.ndarray]:
    """Sharp frames along the recovered trajectory: warps of L by p_t for t in [-1, 1].

    ``result`` is a DeblurResult or a (latent, pose) pair.
    """
    L, p = (result.latent, result.pose) if isinstance(result, DeblurResult) else result
    return [warp(pose_at_time(p, float(t)), D, L, K)[0] for t in frame_times(frames)]
