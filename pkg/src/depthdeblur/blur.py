"""The warp-and-average blur operator and its exact adjoint.

A blurred image is the mean of 2N+1 backward warps of the latent image
along the linear exposure trajectory, at poses (n/N) * p/2 for n = -N..N.
All warps share one sparse matrix (one row per target pixel) so that the
forward and adjoint applications are a pair of sparse products.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp

from .geometry import pose_at_time, sample_times, small_rotation
from .types import DepthMap, DimensionMismatch, Intrinsics, InvalidParameter, Pose6


@numba.njit(cache=True)
def _stencil_kernel(Z, valid, Rt, tv, fx, fy, cx, cy):
    """Fused per-sample projection + bilinear stencil.

    Same arithmetic as ``geometry.source_coords`` / ``bilinear_stencil``;
    returns (idx, wts) of shape (H*W, 4S) and the all-samples validity mask.
    """
    h, w = Z.shape
    S = Rt.shape[0]
    vflat = valid.ravel()
    idx = np.empty((h * w, 4 * S), np.int64)
    wts = np.empty((h * w, 4 * S), np.float64)
    mask = np.ones(h * w, np.bool_)
    for i in range(h):
        b = (i - cy) / fy
        for j in range(w):
            a = (j - cx) / fx
            r = i * w + j
            z = Z[i, j]
            X = a * z
            Y = b * z
            for s in range(S):
                ok = valid[i, j]
                u = float(j)
                v = float(i)
                if ok:
                    px = X - tv[s, 0]
                    py = Y - tv[s, 1]
                    pz = z - tv[s, 2]
                    xn = Rt[s, 0, 0] * px + Rt[s, 0, 1] * py + Rt[s, 0, 2] * pz
                    yn = Rt[s, 1, 0] * px + Rt[s, 1, 1] * py + Rt[s, 1, 2] * pz
                    zn = Rt[s, 2, 0] * px + Rt[s, 2, 1] * py + Rt[s, 2, 2] * pz
                    if zn > 1e-6 * z:
                        du = fx * (xn - a * zn) / zn
                        dv = fy * (yn - b * zn) / zn
                        if np.isfinite(du) and np.isfinite(dv):
                            u = j + du
                            v = i + dv
                        else:
                            ok = False
                    else:
                        ok = False
                if not (u >= 0 and u <= w - 1 and v >= 0 and v <= h - 1):
                    ok = False
                uc = min(max(u, 0.0), w - 1.0)
                vc = min(max(v, 0.0), h - 1.0)
                x0 = min(int(uc), w - 2)  # uc >= 0, truncation is floor
                y0 = min(int(vc), h - 2)
                ax = uc - x0
                ay = vc - y0
                i00 = y0 * w + x0
                k = 4 * s
                idx[r, k] = i00
                idx[r, k + 1] = i00 + 1
                idx[r, k + 2] = i00 + w
                idx[r, k + 3] = i00 + w + 1
                wts[r, k] = (1 - ax) * (1 - ay)
                wts[r, k + 1] = ax * (1 - ay)
                wts[r, k + 2] = (1 - ax) * ay
                wts[r, k + 3] = ax * ay
                for m in range(4):
                    if wts[r, k + m] > 0 and not vflat[idx[r, k + m]]:
                        ok = False
                if not ok:
                    mask[r] = False
    return idx, wts, mask


@dataclass(frozen=True, eq=False)
class BlurOperator:
    pose: Pose6
    intrinsics: Intrinsics
    n_half: int
    shape: tuple[int, int]
    matrix: sp.csr_matrix  # (H*W, H*W), rows sum to one
    mask: np.ndarray  # (H, W) True where every sample is valid

    @classmethod
    def build(cls, p: Pose6, depth: DepthMap, K: Intrinsics, n_half: int,
              compact: bool = True) -> "BlurOperator":
        """Cache the bilinear weights of all 2N+1 time samples.

        ``compact=False`` skips merging duplicate entries: cheaper to build,
        slower to apply, and only equal to the compact form up to rounding.
        The pose solver, which builds an operator per function evaluation,
        uses it.
        """
        if int(n_half) != n_half or n_half < 1:
            raise InvalidParameter("n_half must be an integer >= 1")
        h, w = depth.shape
        n_pix = h * w
        poses = [pose_at_time(p, t) for t in sample_times(n_half)]
        for q in poses:
            q.check_small()
        Rt = np.stack([small_rotation(q.theta).T for q in poses])
        tv = np.array([q.v for q in poses])
        idx, wts, mask = _stencil_kernel(depth.data, depth.valid, Rt, tv, K.fx, K.fy, K.cx, K.cy)
        per_row = 4 * len(poses)
        A = sp.csr_matrix((wts.ravel(), idx.ravel(), np.arange(0, per_row * n_pix + 1, per_row)),
                          shape=(n_pix, n_pix))
        if compact:
            A.sum_duplicates()
            A.eliminate_zeros()
        # per-row normalization instead of a global 1/(2N+1): the zero pose stays bit-exact
        row_sum = np.add.reduceat(A.data, A.indptr[:-1]) if A.nnz else np.ones(n_pix)
        A.data /= np.repeat(row_sum, np.diff(A.indptr))
        return cls(p, K, int(n_half), (h, w), A, mask.reshape(h, w))

    def _flat(self, x) -> tuple[np.ndarray, tuple]:
        a = np.asarray(x, dtype=np.float64)
        if a.shape[:2] != self.shape:
            raise DimensionMismatch(f"array {a.shape[:2]} vs operator {self.shape}")
        return a.reshape(self.shape[0] * self.shape[1], -1), a.shape

    def apply(self, L) -> tuple[np.ndarray, np.ndarray]:
        """Blurred image A_p(L) and the validity mask."""
        flat, shape = self._flat(L)
        return (self.matrix @ flat).reshape(shape), self.mask

    def apply_adjoint(self, residual) -> np.ndarray:
        """A_p^T applied to ``residual`` (scatter of every bilinear weight back to its source)."""
        flat, shape = self._flat(residual)
        return (self.matrix.T @ flat).reshape(shape)

    def forward(self, L) -> np.ndarray:
        return self.apply(L)[0]

    def time_poses(self) -> list[Pose6]:
        return [pose_at_time(self.pose, t) for t in sample_times(self.n_half)]


def build(p: Pose6, depth: DepthMap, K: Intrinsics, n_half: int, compact: bool = True) -> BlurOperator:
    return BlurOperator.build(p, depth, K, n_half, compact)
