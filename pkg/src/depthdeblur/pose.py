"""Camera-motion step: minimize the objective over the 6-vector p with L fixed.

Residuals stack the intensity and gradient mismatch of the re-blurred
latent image and the weighted flow gradients; the concave motion reward
mu1 |p|^2 enters the objective and the LM model directly rather than as a
squared residual. The Jacobian is a central finite difference.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .blur import BlurOperator
from .energy import edge_weights, flow_smoothness_residuals, grad, grad_masks
from .geometry import induced_flow
from .types import DepthMap, EnergyParams, Intrinsics, InvalidParameter, Pose6, SolverOptions

log = logging.getLogger(__name__)

ROT_STEP = 1e-6
TRANS_STEP = 1e-5  # times the scene depth scale
DAMPING_CEILING = 1e8


@dataclass
class PoseSolveReport:
    initial: Pose6
    final: Pose6
    iterations: int = 0
    energies: list[float] = field(default_factory=list)
    converged: bool = False
    reason: str = ""


class PoseObjective:
    """The pose-step objective for a fixed latent image.

    ``value(p)`` sums over the pixels valid at ``p``; ``residuals(p, masks)``
    holds the summation domain fixed, which is what the finite-difference
    Jacobian needs. ``data_weight`` multiplies the intensity and gradient
    mismatch terms; a grayscale solve standing in for a C-channel image
    uses C so the balance against the regularizers matches the color energy.
    """

    def __init__(self, L, B, D: DepthMap, K: Intrinsics, params: EnergyParams, weights=None,
                 data_weight: float = 1.0):
        if not data_weight > 0:
            raise InvalidParameter("data_weight must be positive")
        self.sw = float(np.sqrt(data_weight))
        self.L = np.asarray(L, dtype=np.float64)
        self.B = np.asarray(B, dtype=np.float64)
        self.D, self.K, self.params = D, K, params
        self.weights = edge_weights(self.B, D, params) if weights is None else weights
        self.gB = grad(self.B)
        self.steps = np.array([ROT_STEP] * 3 + [TRANS_STEP * D.scale()] * 3)

    def masks(self, p: Pose6):
        op = BlurOperator.build(p, self.D, self.K, self.params.n_half, compact=False)
        return op.mask, grad_masks(op.mask)

    def residuals(self, p: Pose6, masks=None) -> np.ndarray:
        op = BlurOperator.build(p, self.D, self.K, self.params.n_half, compact=False)
        m, gm = (op.mask, grad_masks(op.mask)) if masks is None else masks
        AL = op.forward(self.L)
        r0 = self.sw * (AL - self.B)[m]
        r1 = self.sw * (grad(AL) - self.gB)[gm]
        r2 = flow_smoothness_residuals(induced_flow(p, self.D, self.K), self.weights)
        return np.concatenate([r0.ravel(), r1.ravel(), r2])

    def value_from(self, p: Pose6, r: np.ndarray) -> float:
        pv = p.as_vector()
        return float(r @ r + self.params.mu1 * (pv @ pv))

    def value(self, p: Pose6, masks=None) -> float:
        return self.value_from(p, self.residuals(p, masks))

    def jacobian(self, p: Pose6, masks) -> np.ndarray:
        x = p.as_vector()
        cols = []
        for j in range(6):
            e = np.zeros(6)
            e[j] = self.steps[j]
            rp = self.residuals(Pose6.from_vector(x + e), masks)
            rm = self.residuals(Pose6.from_vector(x - e), masks)
            cols.append((rp - rm) / (2 * self.steps[j]))
        return np.stack(cols, axis=1)

    def gradient(self, p: Pose6) -> np.ndarray:
        """Gradient of ``value`` as the LM solver sees it: 2 J^T r + 2 mu1 p."""
        masks = self.masks(p)
        r = self.residuals(p, masks)
        J = self.jacobian(p, masks)
        return 2 * J.T @ r + 2 * self.params.mu1 * p.as_vector()


def _feasible(x: np.ndarray, options: SolverOptions) -> bool:
    return bool(np.abs(x[:3]).max() <= options.theta_bound and np.abs(x[3:]).max() <= options.trans_bound)


def solve_pose(L, B, D: DepthMap, K: Intrinsics, p0: Pose6, params: EnergyParams,
               options: SolverOptions | None = None, weights=None,
               data_weight: float = 1.0) -> tuple[Pose6, PoseSolveReport]:
    """Levenberg-Marquardt on the pose objective, starting from ``p0``.

    Only steps that strictly lower the objective are accepted, and trial
    points outside the feasible box are rejected with increased damping.
    """
    options = options or SolverOptions()
    obj = PoseObjective(L, B, D, K, params, weights, data_weight)
    x = p0.as_vector()
    report = PoseSolveReport(initial=p0, final=p0)
    if not _feasible(x, options):
        report.reason = "infeasible start"
        return p0, report
    mu1 = params.mu1
    p = p0
    masks = obj.masks(p)
    r = obj.residuals(p, masks)
    f = obj.value_from(p, r)
    report.energies.append(f)
    lam, nu = 1e-3, 2.0
    accepted = 0
    need_jac = True
    it = 0
    while it < options.lm_max_iter:
        it += 1
        if need_jac:
            J = obj.jacobian(p, masks)
            g = J.T @ r + mu1 * x  # half gradient
            JtJ = J.T @ J
            H = JtJ + mu1 * np.eye(6)  # half Hessian of the model
            scale = np.maximum(np.diag(JtJ), 1e-12 * max(np.diag(JtJ).max(), 1e-300))
            need_jac = False
        try:
            c = np.linalg.cholesky(H + lam * np.diag(scale))
        except np.linalg.LinAlgError:
            lam *= nu
            nu *= 2
            if lam > DAMPING_CEILING:
                report.reason = "damping ceiling"
                break
            continue
        delta = -np.linalg.solve(c.T, np.linalg.solve(c, g))
        if np.linalg.norm(delta) < 1e-8:
            report.converged = True
            report.reason = "small step"
            break
        x_new = x + delta
        rejected = True
        if _feasible(x_new, options):
            p_new = Pose6.from_vector(x_new)
            masks_new = obj.masks(p_new)
            r_new = obj.residuals(p_new, masks_new)
            f_new = obj.value_from(p_new, r_new)
            predicted = -(2 * g @ delta + delta @ H @ delta)
            rho = (f - f_new) / predicted if predicted > 0 else -1.0
            if f_new < f and rho > 0:
                rel = (f - f_new) / max(abs(f), 1e-300)
                x, p, r, f, masks = x_new, p_new, r_new, f_new, masks_new
                report.energies.append(f)
                accepted += 1
                need_jac = True
                rejected = False
                lam *= max(1 / 3, 1 - (2 * rho - 1) ** 3)
                nu = 2.0
                if rel < 1e-6:
                    report.converged = True
                    report.reason = "relative decrease"
                    break
        if rejected:
            lam *= nu
            nu *= 2
            if lam > DAMPING_CEILING:
                report.reason = "damping ceiling"
                break
    else:
        report.reason = "max iterations"
    report.iterations = it
    if accepted == 0 and not report.converged:
        report.reason = "no descent" if report.reason == "max iterations" else report.reason
        report.final = p0
        return p0, report
    report.final = p
    log.debug("pose solve: %d its, %s, E=%.6g", it, report.reason, f)
    return p, report
