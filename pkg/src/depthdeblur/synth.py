"""Ground-truth benchmark generation: sample a camera shake, blur, add noise."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .blur import BlurOperator
from .geometry import induced_flow
from .types import DepthMap, FlowField, Intrinsics, InvalidParameter, MAX_ROTATION, Pose6, as_image, validate_pair

DEFAULT_NOISE = 0.01
EXPOSURE_T = 0.23  # metadata only; poses are absolute exposure motions


@dataclass(frozen=True, eq=False)
class SynthInstance:
    clean: np.ndarray
    depth: DepthMap
    intrinsics: Intrinsics
    true_pose: Pose6
    blurry: np.ndarray
    true_flow: FlowField
    mask: np.ndarray
    seed: int
    noise_sigma: float
    n_half: int


def procedural_scene(height: int = 96, width: int = 96, seed: int = 0):
    """Textured color image over a slanted plane.

    Checkerboard + smooth color gradient + random soft blobs, depth rising
    from 1.5 m (top) to about 3 m (bottom right). Returns (image, depth, K).
    """
    rng = np.random.default_rng(seed)
    v, u = np.mgrid[0:height, 0:width].astype(np.float64)
    cell = max(4, min(height, width) // 8)
    checker = ((u // cell + v // cell) % 2).astype(np.float64)
    phase = rng.uniform(0, 2 * np.pi, 3)
    img = np.empty((height, width, 3))
    for c in range(3):
        grad_c = 0.5 + 0.5 * np.sin(2 * np.pi * (u / width + 0.7 * v / height) + phase[c])
        img[:, :, c] = 0.45 * checker + 0.25 * grad_c
    blobs = np.zeros((height, width, 3))
    for _ in range(12):
        cu, cv = rng.uniform(0, width), rng.uniform(0, height)
        r = rng.uniform(2.0, max(2.5, 0.12 * min(height, width)))
        color = rng.uniform(-1, 1, 3)
        blobs += color * np.exp(-((u - cu) ** 2 + (v - cv) ** 2) / (2 * r ** 2))[:, :, None]
    img += 0.3 * np.tanh(blobs)
    img = ndimage.gaussian_filter(img, sigma=(0.5, 0.5, 0))
    lo, hi = img.min(), img.max()
    img = 0.05 + 0.9 * (img - lo) / (hi - lo)
    depth = 1.5 + 1.5 * (0.7 * v / max(height - 1, 1) + 0.3 * u / max(width - 1, 1))
    return as_image(img), DepthMap(depth), Intrinsics.default_for(height, width)


def sample_motion(sigma_a: float, sigma_t: float, seed=None, theta_bound: float = 0.3,
                  trans_bound: float | None = None) -> Pose6:
    """Gaussian camera shake: theta ~ N(0, sigma_a^2), v ~ N(0, sigma_t^2) per component.

    Draws are repeated until they fall inside the feasible box
    |theta|_inf <= theta_bound, |v|_inf <= trans_bound (default 10 sigma_t)
    and |theta| <= 0.5. ``seed`` may be an int or a numpy Generator.
    """
    if not (sigma_a > 0 and sigma_t > 0):
        raise InvalidParameter("sigma_a and sigma_t must be positive")
    trans_bound = 10 * sigma_t if trans_bound is None else trans_bound
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    while True:
        theta = rng.normal(0.0, sigma_a, 3)
        v = rng.normal(0.0, sigma_t, 3)
        if (np.abs(theta).max() <= theta_bound and np.linalg.norm(theta) <= MAX_ROTATION
                and np.abs(v).max() <= trans_bound):
            return Pose6(tuple(theta), tuple(v))


def synthesize(clean, depth: DepthMap, K: Intrinsics, p: Pose6, n_half: int = 10,
               noise_sigma: float = DEFAULT_NOISE, seed: int = 0) -> SynthInstance:
    """Blur ``clean`` by motion ``p`` (mean of 2N+1 warps), add seeded Gaussian noise, clamp."""
    clean = as_image(clean)
    validate_pair(clean, depth)
    K.check_bounds(*depth.shape)
    if noise_sigma < 0:
        raise InvalidParameter("noise_sigma must be non-negative")
    op = BlurOperator.build(p, depth, K, n_half)
    blurred, mask = op.apply(clean)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        blurred = blurred + rng.normal(0.0, noise_sigma, blurred.shape)
    blurry = as_image(blurred, clamp=True)
    return SynthInstance(clean, depth, K, p, blurry, induced_flow(p, depth, K), mask,
                         int(seed), float(noise_sigma), int(n_half))


def procedural_instance(seed: int, size: int = 96, sigma_a: float = 0.05, sigma_t: float = 0.05,
                        n_half: int = 10, noise_sigma: float = DEFAULT_NOISE) -> SynthInstance:
    """Scene, motion and noise all derived from one seed."""
    scene_ss, motion_ss, noise_ss = np.random.SeedSequence(seed).spawn(3)
    clean, depth, K = procedural_scene(size, size, int(scene_ss.generate_state(1)[0]))
    p = sample_motion(sigma_a, sigma_t, np.random.default_rng(motion_ss))
    inst = synthesize(clean, depth, K, p, n_half, noise_sigma, int(noise_ss.generate_state(1)[0]))
    return SynthInstance(inst.clean, depth, K, p, inst.blurry, inst.true_flow, inst.mask,
                         int(seed), inst.noise_sigma, inst.n_half)
