"""Image and flow quality measures."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .types import DimensionMismatch, FlowField, ImageTooSmall

SSIM_SIGMA = 1.5
SSIM_RADIUS = 5  # 11x11 window
SSIM_K1, SSIM_K2 = 0.01, 0.03


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[:, :, None], b[:, :, None]
    return a, b


def psnr(a, b, mask: np.ndarray | None = None) -> float:
    """10 log10(1 / MSE) with the MSE pooled over channels and the pixels in ``mask``.

    Identical inputs give ``inf``.
    """
    a, b = _pair(a, b)
    d = (a - b) ** 2
    if mask is not None:
        d = d[np.asarray(mask, dtype=bool)]
    mse = float(d.mean())
    return math.inf if mse == 0 else 10.0 * math.log10(1.0 / mse)


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean SSIM over the windows that fit inside the image, averaged over channels.

    Gaussian-weighted 11x11 windows (sigma 1.5) with population statistics.
    """
    a, b = _pair(a, b)
    if min(a.shape[:2]) < 2 * SSIM_RADIUS + 1:
        raise ImageTooSmall(f"SSIM needs at least 11x11, got {a.shape[:2]}")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    r = SSIM_RADIUS
    trunc = r / SSIM_SIGMA

    def blur(x):
        return ndimage.gaussian_filter(x, SSIM_SIGMA, truncate=trunc)

    scores = []
    for c in range(a.shape[2]):
        x, y = a[:, :, c], b[:, :, c]
        mx, my = blur(x), blur(y)
        vx = blur(x * x) - mx * mx
        vy = blur(y * y) - my * my
        cxy = blur(x * y) - mx * my
        s = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        scores.append(s[r:-r, r:-r].mean())
    return float(np.mean(scores))


def endpoint_error(estimated: FlowField, truth: FlowField) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel endpoint error and the mask of pixels valid in both fields."""
    if estimated.shape != truth.shape:
        raise DimensionMismatch(f"{estimated.shape} vs {truth.shape}")
    return np.linalg.norm(estimated.data - truth.data, axis=-1), estimated.valid & truth.valid


def flow_error(estimated: FlowField, truth: FlowField) -> float:
    """Percentage of valid pixels whose endpoint error exceeds both 3 px and 5% of |truth|."""
    epe, valid = endpoint_error(estimated, truth)
    if not valid.any():
        return 0.0
    bad = (epe > 3.0) & (epe > 0.05 * np.linalg.norm(truth.data, axis=-1))
    return 100.0 * float(bad[valid].mean())


@dataclass
class EvalReport:
    psnr: float
    ssim: float
    flow_error_pct: float | None
    valid_pixels: int
    mean_epe: float | None = None

    def to_text(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            if v is None:
                continue
            if isinstance(v, float):
                v = "inf" if math.isinf(v) else f"{v:.6f}"
            lines.append(f"{k}={v}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        d = {k: ("inf" if isinstance(v, float) and math.isinf(v) else v) for k, v in asdict(self).items()}
        return json.dumps(d, indent=2, sort_keys=True)


def evaluate(latent, clean, estimated_flow: FlowField | None = None,
             true_flow: FlowField | None = None) -> EvalReport:
    fe = epe = None
    if estimated_flow is not None and true_flow is not None:
        fe = flow_error(estimated_flow, true_flow)
        e, valid = endpoint_error(estimated_flow, true_flow)
        epe = float(e[valid].mean()) if valid.any() else 0.0
    latent = np.asarray(latent)
    return EvalReport(psnr(latent, clean), ssim(latent, clean), fe,
                      int(latent.shape[0] * latent.shape[1]), epe)
