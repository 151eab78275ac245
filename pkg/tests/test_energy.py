import numpy as np
import pytest

from depthdeblur import BlurOperator, DepthMap, DimensionMismatch, EnergyParams, Intrinsics, Pose6, induced_flow
from depthdeblur.energy import (data_term, edge_weights, flow_smoothness, grad, grad_adjoint, total_energy, tv)
from conftest import random_pose, random_scene
from oracles import brute_force_blur


def test_grad_adjoint_is_transpose(rng):
    x = rng.normal(size=(7, 9, 3))
    g = rng.normal(size=(2, 7, 9, 3))
    assert np.vdot(grad(x), g) == pytest.approx(np.vdot(x, grad_adjoint(g)), rel=1e-12)


def test_data_term_trivial_cases(rng):
    img, D, K = random_scene(rng, 10, 10)
    op = BlurOperator.build(Pose6.zero(), D, K, 3)
    assert data_term(img, img, op) == 0.0
    eps = 0.01
    assert data_term(img + eps, img, op) == pytest.approx(eps ** 2 * img.size, rel=1e-9)


def test_data_term_matches_brute_force(rng):
    img, D, K = random_scene(rng, 16, 16)
    B = rng.uniform(0, 1, img.shape)
    p = random_pose(rng)
    AL, m = brute_force_blur(img, p.theta, p.v, D.data, K, 3)
    r = (AL - B)[m]
    gx = np.diff(AL - B, axis=1)[(m[:, 1:] & m[:, :-1])]
    gy = np.diff(AL - B, axis=0)[(m[1:] & m[:-1])]
    ref = (r ** 2).sum() + (gx ** 2).sum() + (gy ** 2).sum()
    assert data_term(img, B, BlurOperator.build(p, D, K, 3)) == pytest.approx(ref, rel=1e-9)


def test_data_term_dimension_mismatch(rng):
    img, D, K = random_scene(rng, 8, 8)
    with pytest.raises(DimensionMismatch):
        data_term(img, img[:, :, :1], BlurOperator.build(Pose6.zero(), D, K, 2))


def test_edge_weights_range_and_edges():
    params = EnergyParams()
    B = np.zeros((10, 10, 3))
    B[:, 5:] = 1.0
    D = DepthMap(np.full((10, 10), 2.0))
    w = edge_weights(B, D, params)
    assert np.all(w > 0) and np.all(w <= params.mu2 + params.mu3 + 1e-15)
    assert w[0, 0] == pytest.approx(params.mu2 + params.mu3)
    assert w[0, 4] == pytest.approx(params.mu3)  # across the image edge


def test_tv_channel_joint():
    L = np.zeros((3, 3, 3))
    L[:, 2] = [3.0, 4.0, 0.0]
    assert tv(L) == pytest.approx(3 * 5.0)


def test_flow_smoothness_zero_for_constant_flow():
    D = DepthMap(np.full((8, 8), 2.0))
    K = Intrinsics.default_for(8, 8)
    f = induced_flow(Pose6(v=(0.1, 0.0, 0.0)), D, K)
    assert flow_smoothness(f, np.ones((8, 8))) == pytest.approx(0.0, abs=1e-20)


def test_total_energy_composition(rng):
    img, D, K = random_scene(rng, 12, 12)
    params = EnergyParams()
    p = random_pose(rng)
    op = BlurOperator.build(p, D, K, params.n_half)
    w = edge_weights(img, D, params)
    expected = (data_term(img, img, op) + params.mu1 * (p.as_vector() ** 2).sum()
                + flow_smoothness(induced_flow(p, D, K), w) + params.mu4 * tv(img))
    assert total_energy(img, img, p, D, K, params) == pytest.approx(expected, rel=1e-12)
