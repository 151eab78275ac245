import numpy as np
import pytest

from depthdeblur import (DepthMap, DimensionMismatch, EnergyParams, FlowField, ImageTooSmall, Intrinsics,
                         InvalidParameter, NonPositiveDepth, Pose6, SolverOptions, as_image)
from depthdeblur.types import params_from_mapping, validate_pair


def test_as_image_promotes_gray_and_is_read_only():
    a = as_image(np.full((4, 5), 0.5))
    assert a.shape == (4, 5, 1)
    with pytest.raises(ValueError):
        a[0, 0, 0] = 1.0


@pytest.mark.parametrize("bad", [np.full((4, 4, 3), 1.5), np.full((4, 4, 3), np.nan)])
def test_as_image_rejects_out_of_range(bad):
    with pytest.raises(InvalidParameter):
        as_image(bad)


def test_as_image_clamp():
    assert as_image(np.full((3, 3), 1.5), clamp=True).max() == 1.0


def test_as_image_shapes():
    with pytest.raises(DimensionMismatch):
        as_image(np.zeros((4, 4, 2)))
    with pytest.raises(ImageTooSmall):
        as_image(np.zeros((1, 4)))


def test_depth_validity():
    d = DepthMap(np.array([[1.0, 0.0], [np.nan, 2.0]]))
    assert d.valid.tolist() == [[True, False], [False, True]]
    assert d.data[1, 0] == 0.0
    with pytest.raises(NonPositiveDepth):
        DepthMap(np.array([[1.0, -1.0]]), np.array([[True, True]]))


def test_pose_vector_round_trip():
    p = Pose6((0.1, -0.2, 0.3), (1.0, 2.0, 3.0))
    assert Pose6.from_vector(p.as_vector()) == p
    assert (-p).as_vector().tolist() == [-0.1, 0.2, -0.3, -1.0, -2.0, -3.0]
    with pytest.raises(InvalidParameter):
        Pose6.from_vector([1, 2, 3])


def test_intrinsics():
    K = Intrinsics.default_for(96, 96)
    assert K.fx == 64.0 and K.cx == 47.5
    with pytest.raises(InvalidParameter):
        Intrinsics(-1, 1, 0, 0)
    with pytest.raises(InvalidParameter):
        K.check_bounds(10, 10)
    Ks = K.scaled(0.5)
    assert Ks.fx == 32.0 and Ks.cx == 23.5


def test_flow_field_invalid_entries_zeroed():
    f = FlowField(np.full((2, 2, 2), np.nan), np.zeros((2, 2), bool))
    assert np.all(f.data == 0)


@pytest.mark.parametrize("kw", [dict(mu1=1.0), dict(mu4=0.0), dict(pyramid_scale=1.0), dict(n_half=0)])
def test_energy_params_validation(kw):
    with pytest.raises(InvalidParameter):
        EnergyParams(**kw)


def test_solver_options():
    assert SolverOptions(sigma_t=0.05).trans_bound == pytest.approx(0.5)
    with pytest.raises(InvalidParameter):
        SolverOptions(theta_bound=0.6)


def test_params_from_mapping_overlay_and_unknown_keys():
    e, s = params_from_mapping({"mu1": -5.0, "alternations": 2})
    assert e.mu1 == -5.0 and s.alternations == 2
    with pytest.raises(InvalidParameter):
        params_from_mapping({"nope": 1})


def test_validate_pair():
    with pytest.raises(DimensionMismatch):
        validate_pair(as_image(np.zeros((4, 4))), DepthMap(np.ones((4, 5))))
