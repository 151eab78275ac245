import numpy as np
import pytest

from depthdeblur import BlurOperator, CGBreakdown, EnergyParams, Pose6, procedural_instance, psnr
from depthdeblur.latent import PrimalSubproblem, conjugate_gradient, latent_objective, project_dual, solve_latent


def test_conjugate_gradient_solves_spd(rng):
    M = rng.normal(size=(20, 20))
    A = M @ M.T + 20 * np.eye(20)
    b = rng.normal(size=20)
    x, its, rel = conjugate_gradient(lambda v: A @ v, b, np.zeros(20), tol=1e-12, maxiter=100)
    assert np.allclose(A @ x, b, atol=1e-8) and rel < 1e-10 and its <= 21


def test_conjugate_gradient_detects_indefinite():
    with pytest.raises(CGBreakdown):
        conjugate_gradient(lambda v: -v, np.ones(3), np.zeros(3))


def test_project_dual_unit_ball(rng):
    q = project_dual(rng.normal(0, 3, (2, 5, 5, 3)))
    assert np.all(np.linalg.norm(q, axis=-1) <= 1 + 1e-12)
    small = np.full((2, 2, 2, 3), 0.1)
    assert np.array_equal(project_dual(small), small)


def test_primal_normal_operator_is_symmetric_positive(rng):
    inst = procedural_instance(0, 24)
    op = BlurOperator.build(inst.true_pose, inst.depth, inst.intrinsics, 4)
    sub = PrimalSubproblem(op, inst.blurry, 10.0)
    x, y = rng.normal(size=inst.blurry.shape), rng.normal(size=inst.blurry.shape)
    assert np.vdot(sub.normal(x), y) == pytest.approx(np.vdot(x, sub.normal(y)), rel=1e-10)
    assert np.vdot(sub.normal(x), x) > 0


def test_true_pose_deblurring_improves_psnr():
    inst = procedural_instance(0, 48)
    params = EnergyParams()
    op = BlurOperator.build(inst.true_pose, inst.depth, inst.intrinsics, params.n_half)
    L, rep = solve_latent(inst.blurry, op, inst.blurry, params, iterations=30)
    assert rep.converged
    assert psnr(L, inst.clean) > psnr(inst.blurry, inst.clean) + 2.0
    assert all(b <= a for a, b in zip(rep.energies, rep.energies[1:]))
    assert L.min() >= 0 and L.max() <= 1
    assert latent_objective(L, inst.blurry, op, params.mu4) == pytest.approx(rep.energies[-1])


def test_zero_blur_keeps_sharp_image(rng):
    inst = procedural_instance(0, 32, noise_sigma=0.0)
    op = BlurOperator.build(Pose6.zero(), inst.depth, inst.intrinsics, 4)
    L, _ = solve_latent(inst.clean, op, inst.clean, EnergyParams(), iterations=10)
    assert psnr(L, inst.clean) > 35
