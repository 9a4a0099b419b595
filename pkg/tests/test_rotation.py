import numpy as np
import pytest

from hoikit.errors import DegenerateRotationError, ValidationError
from hoikit.rotation import (
    axis_angle_to_matrix,
    geodesic_angle,
    matrix_to_axis_angle,
    matrix_to_rot6d,
    nearest_rotation,
    random_rotation,
    rot6d_to_matrix,
    rotation_difference,
    slerp,
)


def test_identity_6d_decodes_to_identity():
    assert np.allclose(rot6d_to_matrix(np.array([1.0, 0, 0, 0, 1, 0])), np.eye(3))


def test_6d_decode_90_degrees_about_z():
    # hand-computed Gram-Schmidt of (0,1,0,-1,0,0)
    expected = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    assert np.allclose(rot6d_to_matrix(np.array([0.0, 1, 0, -1, 0, 0])), expected)


def test_6d_decode_scale_invariant():
    assert np.allclose(rot6d_to_matrix(np.array([2.0, 0, 0, 0, 3, 0])), np.eye(3))


def test_6d_decode_rejects_degenerate():
    with pytest.raises(DegenerateRotationError):
        rot6d_to_matrix(np.zeros(6))
    with pytest.raises(DegenerateRotationError):
        rot6d_to_matrix(np.array([1.0, 0, 0, 2.0, 0, 0]))  # parallel columns


def test_decode_output_is_orthonormal():
    rng = np.random.default_rng(0)
    r = rot6d_to_matrix(rng.normal(size=(50, 6)))
    eye = np.einsum("nij,nkj->nik", r, r)
    assert np.abs(eye - np.eye(3)).max() < 1e-9
    assert np.abs(np.linalg.det(r) - 1.0).max() < 1e-9


def test_encode_identity():
    assert np.array_equal(matrix_to_rot6d(np.eye(3)), np.array([1.0, 0, 0, 0, 1, 0]))


def test_encode_180_about_x():
    r = np.diag([1.0, -1.0, -1.0])
    assert np.allclose(matrix_to_rot6d(r), np.array([1.0, 0, 0, 0, -1, 0]))


def test_encode_rejects_non_orthonormal():
    with pytest.raises(ValidationError):
        matrix_to_rot6d(np.eye(3) * 2.0)


def test_rot6d_round_trip_1000_random_rotations():
    rng = np.random.default_rng(123)
    r = random_rotation(rng, (1000,))
    back = rot6d_to_matrix(matrix_to_rot6d(r))
    assert np.abs(back - r).max() < 1e-9


def test_rotation_difference_identity_and_composition():
    rng = np.random.default_rng(7)
    r = random_rotation(rng)
    assert np.allclose(rotation_difference(r, r), np.eye(3), atol=1e-12)
    z90 = axis_angle_to_matrix(np.array([0, 0, np.pi / 2]))
    assert np.allclose(rotation_difference(z90, np.eye(3)), z90)
    for _ in range(50):
        r1 = random_rotation(rng)
        r2 = random_rotation(rng)
        assert np.abs(rotation_difference(r1 @ r2, r2) - r1).max() < 1e-9


def test_rotation_difference_recovers_left_factor():
    rng = np.random.default_rng(11)
    a = random_rotation(rng, (20,))
    b = random_rotation(rng, (20,))
    assert np.abs(rotation_difference(a, b) @ b - a).max() < 1e-9


def test_axis_angle_round_trip_including_near_pi():
    rng = np.random.default_rng(3)
    aa = rng.normal(size=(100, 3))
    aa = aa / np.linalg.norm(aa, axis=1, keepdims=True) * rng.uniform(0, np.pi, size=(100, 1))
    aa[0] = [0, 0, np.pi - 1e-9]
    aa[1] = [0, 0, 0]
    r = axis_angle_to_matrix(aa)
    back = axis_angle_to_matrix(matrix_to_axis_angle(r))
    assert np.abs(back - r).max() < 1e-7


def test_slerp_endpoints_and_fraction():
    z90 = axis_angle_to_matrix(np.array([0, 0, np.pi / 2]))
    assert np.allclose(slerp(np.eye(3), z90, np.asarray(0.0)), np.eye(3))
    assert np.abs(slerp(np.eye(3), z90, np.asarray(1.0)) - z90).max() < 1e-12
    mid = slerp(np.eye(3), z90, np.asarray(0.4))
    assert np.allclose(matrix_to_axis_angle(mid), [0, 0, 0.4 * np.pi / 2])


def test_geodesic_angle():
    z = axis_angle_to_matrix(np.array([0, 0, 1.2]))
    assert abs(geodesic_angle(z, np.eye(3)) - 1.2) < 1e-12
    assert geodesic_angle(z, z) < 1e-6


def test_nearest_rotation_projects_noise():
    rng = np.random.default_rng(5)
    r = random_rotation(rng, (10,))
    noisy = r + rng.normal(scale=0.05, size=r.shape)
    proj = nearest_rotation(noisy)
    eye = np.einsum("nij,nkj->nik", proj, proj)
    assert np.abs(eye - np.eye(3)).max() < 1e-12
    assert np.all(np.linalg.det(proj) > 0)
    assert np.abs(proj - r).max() < 0.2
