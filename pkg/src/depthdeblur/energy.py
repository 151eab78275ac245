"""Objective terms: data fit, edge-aware flow smoothness, motion reward, TV.

Every discrete gradient here is a forward difference with a replicated
boundary (the last row/column difference is zero). Images are (H, W, C)
arrays; sums run over pixels whose data are valid.
"""
from __future__ import annotations

import numpy as np

from .blur import BlurOperator
from .geometry import induced_flow
from .types import DepthMap, DimensionMismatch, EnergyParams, FlowField, Intrinsics, Pose6, to_gray


def grad(x: np.ndarray) -> np.ndarray:
    """Forward differences of an (H, W, ...) array, stacked as (2, H, W, ...) = (d/du, d/dv)."""
    g = np.zeros((2,) + x.shape)
    g[0, :, :-1] = x[:, 1:] - x[:, :-1]
    g[1, :-1] = x[1:] - x[:-1]
    return g


def grad_adjoint(g: np.ndarray) -> np.ndarray:
    """Exact transpose of ``grad`` (minus the divergence)."""
    out = np.zeros(g.shape[1:])
    out[:, :-1] -= g[0, :, :-1]
    out[:, 1:] += g[0, :, :-1]
    out[:-1] -= g[1, :-1]
    out[1:] += g[1, :-1]
    return out


def grad_masks(mask: np.ndarray) -> np.ndarray:
    """Pixels whose forward difference only involves valid pixels, shape (2, H, W)."""
    m = np.zeros((2,) + mask.shape, dtype=bool)
    m[0, :, :-1] = mask[:, 1:] & mask[:, :-1]
    m[1, :-1] = mask[1:] & mask[:-1]
    return m


def tv(L: np.ndarray) -> float:
    """Anisotropic total variation; channels share one magnitude per direction."""
    g = grad(np.asarray(L, dtype=np.float64))
    return float(np.sqrt((g ** 2).sum(axis=-1)).sum())


def _check_same(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")


def data_term_from_blurred(AL: np.ndarray, B: np.ndarray, mask: np.ndarray) -> float:
    _check_same(AL, B)
    r = (AL - B)[mask]
    gm = grad_masks(mask)
    gr = (grad(AL) - grad(B))[gm]
    return float((r ** 2).sum() + (gr ** 2).sum())


def data_term(L: np.ndarray, B: np.ndarray, op: BlurOperator, mask: np.ndarray | None = None) -> float:
    """||A_p L - B||^2 + ||grad A_p L - grad B||^2 over valid pixels.

    ``mask`` overrides the operator's validity mask (used to hold the
    summation domain fixed while differentiating).
    """
    AL, m = op.apply(L)
    return data_term_from_blurred(AL, np.asarray(B, dtype=np.float64), m if mask is None else mask)


def edge_weights(B: np.ndarray, D: DepthMap, params: EnergyParams) -> np.ndarray:
    """mu2 exp(-|grad B|^2 / sB^2) + mu3 exp(-|grad D|^2 / sD^2) per pixel.

    Image gradients are taken on the channel mean; depth gradients on the
    depth normalized to [0, 1] by its valid range.
    """
    B = np.asarray(B, dtype=np.float64)
    if B.shape[:2] != D.shape:
        raise DimensionMismatch(f"image {B.shape[:2]} vs depth {D.shape}")
    gb = grad(to_gray(B)[:, :, 0])
    gd = grad(D.normalized())
    nb = (gb ** 2).sum(axis=0)
    nd = (gd ** 2).sum(axis=0)
    return params.mu2 * np.exp(-nb / params.sigma_b ** 2) + params.mu3 * np.exp(-nd / params.sigma_d ** 2)


def flow_smoothness_residuals(flow: FlowField, weights: np.ndarray) -> np.ndarray:
    """Residuals whose squared sum is S(p): sqrt(weight / n) * flow gradient entries.

    S(p) is the edge-weighted squared flow gradient averaged over the n
    pixels with valid flow. Summed instead of averaged it outweighs the
    data term by an order of magnitude on [0, 1] intensities and biases
    the recovered motion.
    """
    g = grad(flow.data)  # (2, H, W, 2)
    gm = grad_masks(flow.valid)
    n = max(int(flow.valid.sum()), 1)
    sw = np.sqrt(weights / n)
    return (g * sw[None, :, :, None])[gm].ravel()


def flow_smoothness(flow: FlowField, weights: np.ndarray) -> float:
    r = flow_smoothness_residuals(flow, weights)
    return float(r @ r)


def reg_term(p: Pose6, L: np.ndarray, flow: FlowField, weights: np.ndarray, params: EnergyParams) -> float:
    """mu1 |p|^2 + S(p) + mu4 TV(L); mu1 < 0 rewards non-zero motion."""
    pv = p.as_vector()
    return float(params.mu1 * (pv @ pv) + flow_smoothness(flow, weights) + params.mu4 * tv(L))


def total_energy(L: np.ndarray, B: np.ndarray, p: Pose6, D: DepthMap, K: Intrinsics,
                 params: EnergyParams, mask: np.ndarray | None = None,
                 weights: np.ndarray | None = None) -> float:
    """Data term plus regularizers for latent image ``L`` and motion ``p``."""
    op = BlurOperator.build(p, D, K, params.n_half)
    if weights is None:
        weights = edge_weights(B, D, params)
    return data_term(L, B, op, mask) + reg_term(p, L, induced_flow(p, D, K), weights, params)
