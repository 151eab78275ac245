"""Image step: recover L for a fixed blur operator by primal-dual TV.

Each outer iteration takes a projected dual ascent step on the TV dual
field q, then solves the quadratic primal subproblem

    ||M(A L - B)||^2 + ||Mg(grad A L - grad B)||^2 + ||L - z||^2 / (2 eta),
    z = L_prev - eta * mu4 * grad^T q,

with conjugate gradients on its normal equations. The returned image is
the clamped iterate with the lowest objective seen (the starting image
included), so the step never increases the energy.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .blur import BlurOperator
from .energy import data_term_from_blurred, grad, grad_adjoint, grad_masks, tv
from .types import CGBreakdown, DimensionMismatch, EnergyParams, SolverOptions

log = logging.getLogger(__name__)


@dataclass
class LatentSolveReport:
    outer_iterations: int = 0
    cg_iterations: list[int] = field(default_factory=list)
    cg_residuals: list[float] = field(default_factory=list)
    energies: list[float] = field(default_factory=list)  # best objective so far, starting point first
    converged: bool = False
    message: str = ""
    dual: np.ndarray | None = None  # final q, for warm-starting the next call


def conjugate_gradient(apply_A, b: np.ndarray, x0: np.ndarray, tol: float = 1e-6, maxiter: int = 200):
    """Solve A x = b for symmetric positive definite ``apply_A``.

    Stops when ||b - A x|| <= tol * ||b||. Returns (x, iterations, relative residual).
    """
    x = x0.copy()
    r = b - apply_A(x)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), 0, 0.0
    d = r.copy()
    rr = float(np.vdot(r, r))
    it = 0
    while np.sqrt(rr) > tol * bnorm and it < maxiter:
        Ad = apply_A(d)
        dAd = float(np.vdot(d, Ad))
        if not np.isfinite(dAd) or dAd <= 0:
            raise CGBreakdown(f"curvature {dAd} at CG iteration {it}")
        alpha = rr / dAd
        x += alpha * d
        r -= alpha * Ad
        rr_new = float(np.vdot(r, r))
        if not np.isfinite(rr_new):
            raise CGBreakdown(f"non-finite residual at CG iteration {it}")
        d = r + (rr_new / rr) * d
        rr = rr_new
        it += 1
    return x, it, float(np.sqrt(rr) / bnorm)


class PrimalSubproblem:
    """Normal equations of the quadratic primal step for a fixed operator."""

    def __init__(self, op: BlurOperator, B: np.ndarray, eta: float):
        self.op = op
        self.eta = eta
        self.mask = op.mask[:, :, None]
        self.gmask = grad_masks(op.mask)[..., None]
        self.data_rhs = 2 * self._AtGt(self.mask * B, self.gmask * grad(B))

    def _AtGt(self, r, gr):
        return self.op.apply_adjoint(r + grad_adjoint(gr))

    def normal(self, L: np.ndarray) -> np.ndarray:
        AL = self.op.forward(L)
        return 2 * self._AtGt(self.mask * AL, self.gmask * grad(AL)) + L / self.eta

    def rhs(self, z: np.ndarray) -> np.ndarray:
        return self.data_rhs + z / self.eta


def project_dual(q: np.ndarray) -> np.ndarray:
    """Per direction, scale the channel vector of q into the unit ball."""
    norm = np.sqrt((q ** 2).sum(axis=-1, keepdims=True))
    return q / np.maximum(1.0, norm)


def latent_objective(L: np.ndarray, B: np.ndarray, op: BlurOperator, mu4: float) -> float:
    AL, m = op.apply(L)
    return data_term_from_blurred(AL, B, m) + mu4 * tv(L)


def solve_latent(B, op: BlurOperator, L0, params: EnergyParams,
                 options: SolverOptions | None = None, iterations: int | None = None,
                 dual: np.ndarray | None = None):
    """Primal-dual TV deblurring of ``B`` under ``op`` starting from ``L0``.

    ``dual`` warm-starts q (shape (2,) + L0.shape). Returns (L, report);
    L is clamped to [0, 1] and is the lowest-objective iterate, so its
    objective never exceeds that of the clamped start.
    """
    options = options or SolverOptions()
    n_outer = options.latent_iters if iterations is None else iterations
    B = np.asarray(B, dtype=np.float64)
    L = np.array(L0, dtype=np.float64)
    if B.shape != L.shape or B.shape[:2] != op.shape:
        raise DimensionMismatch(f"B {B.shape}, L0 {L.shape}, operator {op.shape}")
    sub = PrimalSubproblem(op, B, params.eta)
    q = np.zeros((2,) + L.shape) if dual is None else project_dual(np.array(dual, dtype=np.float64))
    if q.shape != (2,) + L.shape:
        raise DimensionMismatch(f"dual {q.shape} vs image {L.shape}")
    best = np.clip(L, 0.0, 1.0)
    best_e = latent_objective(best, B, op, params.mu4)
    report = LatentSolveReport(energies=[best_e])
    for r in range(n_outer):
        q = project_dual(q + params.gamma * grad(L))
        z = L - params.eta * params.mu4 * grad_adjoint(q)
        try:
            L, its, res = conjugate_gradient(sub.normal, sub.rhs(z), L, options.cg_tol, options.cg_maxiter)
        except CGBreakdown as exc:
            report.message = str(exc)
            log.warning("latent solve aborted: %s", exc)
            break
        report.outer_iterations = r + 1
        report.cg_iterations.append(its)
        report.cg_residuals.append(res)
        cand = np.clip(L, 0.0, 1.0)
        e = latent_objective(cand, B, op, params.mu4)
        if e < best_e:
            best, best_e = cand, e
        report.energies.append(best_e)
    else:
        report.converged = True
    report.dual = q
    return best, report
