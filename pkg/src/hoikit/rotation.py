"""Rotation utilities: 6-DOF continuity representation, axis-angle, slerp.

All matrices are 3x3 float64. The 6-DOF representation is the first two
columns of the rotation matrix, decoded by Gram-Schmidt orthonormalization,
which is continuous over SO(3). Functions accept a trailing batch: an input
of shape (..., 6) or (..., 3, 3) is processed elementwise over the leading
axes.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateRotationError, ValidationError

_EPS = 1e-12


def rot6d_to_matrix(r: np.ndarray) -> np.ndarray:
    """Decode a 6-DOF rotation vector into a rotation matrix.

    Column 1 is the normalized first 3-vector, column 2 the Gram-Schmidt
    residual of the second, column 3 their cross product. Scale of the
    input does not matter.

    Args:
        r: (..., 6) array, concatenation of two 3-vectors.
    Returns:
        (..., 3, 3) rotation matrices, orthonormal with det +1.
    Raises:
        DegenerateRotationError: zero first vector or parallel columns.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.shape[-1] != 6:
        raise ValidationError(f"expected trailing dimension 6, got shape {r.shape}")
    a = r[..., 0:3]
    b = r[..., 3:6]
    na = np.linalg.norm(a, axis=-1, keepdims=True)
    if np.any(na < _EPS):
        raise DegenerateRotationError("first column of 6-DOF rotation is zero")
    c1 = a / na
    b_res = b - np.sum(c1 * b, axis=-1, keepdims=True) * c1
    nb = np.linalg.norm(b_res, axis=-1, keepdims=True)
    if np.any(nb < _EPS):
        raise DegenerateRotationError("6-DOF rotation columns are parallel")
    c2 = b_res / nb
    c3 = np.cross(c1, c2)
    return np.stack([c1, c2, c3], axis=-1)


def matrix_to_rot6d(mat: np.ndarray) -> np.ndarray:
    """Flatten the first two columns of a rotation matrix into a 6-vector.

    The input must be orthonormal with det +1 within 1e-6.
    """
    mat = np.asarray(mat, dtype=np.float64)
    validate_rotation(mat)
    return np.concatenate([mat[..., :, 0], mat[..., :, 1]], axis=-1)


def validate_rotation(mat: np.ndarray, tol: float = 1e-6) -> None:
    """Raise ValidationError unless mat is orthonormal with det +1 within tol."""
    mat = np.asarray(mat, dtype=np.float64)
    if mat.shape[-2:] != (3, 3):
        raise ValidationError(f"expected (..., 3, 3) matrices, got shape {mat.shape}")
    eye = np.eye(3)
    err = np.abs(mat @ np.swapaxes(mat, -1, -2) - eye).max()
    if err > tol:
        raise ValidationError(f"matrix not orthonormal: max deviation {err:.3e}")
    det = np.linalg.det(mat)
    if np.abs(det - 1.0).max() > tol:
        raise ValidationError("matrix determinant differs from +1 (reflection?)")


def rotation_difference(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Relative rotation a . b^T; identity when a == b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    validate_rotation(a)
    validate_rotation(b)
    return a @ np.swapaxes(b, -1, -2)


def axis_angle_to_matrix(axis_angle: np.ndarray) -> np.ndarray:
    """Rodrigues formula. axis_angle is (..., 3), axis * angle in radians."""
    v = np.asarray(axis_angle, dtype=np.float64)
    theta = np.linalg.norm(v, axis=-1, keepdims=True)
    small = theta[..., 0] < 1e-10
    axis = np.where(theta < 1e-10, 0.0, v / np.where(theta < 1e-10, 1.0, theta))
    x, y, z = axis[..., 0], axis[..., 1], axis[..., 2]
    zero = np.zeros_like(x)
    k = np.stack(
        [
            np.stack([zero, -z, y], axis=-1),
            np.stack([z, zero, -x], axis=-1),
            np.stack([-y, x, zero], axis=-1),
        ],
        axis=-2,
    )
    th = theta[..., None]
    mat = np.eye(3) + np.sin(th) * k + (1.0 - np.cos(th)) * (k @ k)
    # first-order expansion keeps the small-angle branch exact enough
    if np.any(small):
        approx = np.eye(3) + k * th
        mat = np.where(small[..., None, None], approx, mat)
    return mat


def matrix_to_axis_angle(mat: np.ndarray) -> np.ndarray:
    """Log map of a rotation matrix: axis * angle, angle in [0, pi]."""
    mat = np.asarray(mat, dtype=np.float64)
    trace = np.trace(mat, axis1=-2, axis2=-1)
    cos_t = np.clip((trace - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_t)
    # off-diagonal differences give axis * 2 sin(theta)
    w = np.stack(
        [
            mat[..., 2, 1] - mat[..., 1, 2],
            mat[..., 0, 2] - mat[..., 2, 0],
            mat[..., 1, 0] - mat[..., 0, 1],
        ],
        axis=-1,
    )
    sin_t = np.sin(theta)
    generic = sin_t > 1e-7
    scale = np.where(generic, theta / np.where(generic, 2.0 * sin_t, 1.0), 0.5)
    out = w * scale[..., None]
    near_pi = theta > np.pi - 1e-6
    if np.any(near_pi):
        out = _axis_angle_near_pi(mat, theta, near_pi, out)
    return out


def _axis_angle_near_pi(mat, theta, mask, out):
    # near pi the off-diagonal route degenerates; recover the axis from
    # the largest diagonal entry of (R + I) / 2 = axis axis^T at theta = pi
    m = np.broadcast_to(mat, theta.shape + (3, 3))
    sym = (m + np.eye(3)) / 2.0
    diag = np.stack([sym[..., 0, 0], sym[..., 1, 1], sym[..., 2, 2]], axis=-1)
    k = np.argmax(diag, axis=-1)
    flat_sym = sym.reshape(-1, 3, 3)
    flat_k = np.ravel(k)
    axis = flat_sym[np.arange(flat_sym.shape[0]), flat_k, :]
    axis = axis / np.maximum(np.sqrt(np.abs(diag.reshape(-1, 3)[np.arange(flat_k.size), flat_k])), _EPS)[..., None]
    norm = np.linalg.norm(axis, axis=-1, keepdims=True)
    axis = axis / np.maximum(norm, _EPS)
    fixed = axis.reshape(theta.shape + (3,)) * theta[..., None]
    return np.where(mask[..., None], fixed, out)


def geodesic_angle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Geodesic distance (radians) between rotations a and b."""
    rel = np.asarray(a, dtype=np.float64) @ np.swapaxes(np.asarray(b, dtype=np.float64), -1, -2)
    trace = np.trace(rel, axis1=-2, axis2=-1)
    return np.arccos(np.clip((trace - 1.0) / 2.0, -1.0, 1.0))


def slerp(a: np.ndarray, b: np.ndarray, u: float | np.ndarray) -> np.ndarray:
    """Spherical interpolation from rotation a (u=0) to b (u=1)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    rel = matrix_to_axis_angle(b @ np.swapaxes(a, -1, -2))
    u = np.asarray(u, dtype=np.float64)
    return axis_angle_to_matrix(u[..., None] * rel) @ a


def nearest_rotation(mat: np.ndarray) -> np.ndarray:
    """Project an arbitrary 3x3 matrix to the closest rotation (SVD polar)."""
    mat = np.asarray(mat, dtype=np.float64)
    u, _, vt = np.linalg.svd(mat)
    det = np.linalg.det(u @ vt)
    fix = np.ones(mat.shape[:-2] + (3,))
    fix[..., 2] = np.sign(det)
    return (u * fix[..., None, :]) @ vt


def random_rotation(rng: np.random.Generator, shape: tuple[int, ...] = ()) -> np.ndarray:
    """Random rotation matrices: random axis, angle uniform in [0, pi]."""
    axis = rng.normal(size=shape + (3,))
    axis /= np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = rng.uniform(0.0, np.pi, size=shape)
    return axis_angle_to_matrix(axis * angle[..., None])
