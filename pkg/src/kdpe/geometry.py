"""Rotation representations and SO(3) tangent-space operations.

Rotations are stored as 3x3 matrices everywhere inside the library. The 6D
two-column encoding produced by generative policies appears only at the
serialization boundary and is recovered to a proper rotation matrix by
Gram-Schmidt orthonormalization.

All functions are pure and operate on plain float64 numpy arrays, so they are
safe to call concurrently.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateRotation

# Below this angle the log map switches to its small-angle series.
SMALL_ANGLE = 1e-7

# Within this distance of pi the rotation axis is recovered from (R + I)/2
# instead of the skew part, which vanishes as sin(theta) -> 0.
NEAR_PI = 1e-6

# Minimum column norm / cross-product norm accepted by the 6D decoder.
DEGENERATE_EPS = 1e-8

# Orthonormality and determinant tolerance for a valid rotation matrix.
ROTATION_TOL = 1e-9

_EYE3 = np.eye(3)


def skew(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix of a 3-vector (hat operator)."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def vee(m: np.ndarray) -> np.ndarray:
    """3-vector of a skew-symmetric matrix (inverse of ``skew``)."""
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def is_rotation(r: np.ndarray, tol: float = ROTATION_TOL) -> bool:
    """True when ``r`` is orthonormal with determinant +1 within ``tol``."""
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        return False
    if np.linalg.norm(r.T @ r - _EYE3) > tol:
        return False
    return abs(np.linalg.det(r) - 1.0) <= tol


def from6d(r6: np.ndarray) -> np.ndarray:
    """Recover a rotation matrix from its 6D two-column encoding.

    The six scalars are the first two columns of a rotation matrix, possibly
    unnormalized. The first column is normalized, the second is orthogonalized
    against it and normalized, and the third is their cross product.

    Raises:
        DegenerateRotation: when either column is near zero or the two
            columns are near parallel. Both checks are scale invariant.
    """
    r6 = np.asarray(r6, dtype=float).reshape(6)
    c1 = r6[:3]
    c2 = r6[3:]
    n1 = np.linalg.norm(c1)
    n2 = np.linalg.norm(c2)
    if not np.all(np.isfinite(r6)) or n1 < DEGENERATE_EPS or n2 < DEGENERATE_EPS:
        raise DegenerateRotation(f"near-zero rotation column (norms {n1:.3e}, {n2:.3e})")
    b1 = c1 / n1
    u2 = c2 / n2
    if np.linalg.norm(np.cross(b1, u2)) < DEGENERATE_EPS:
        raise DegenerateRotation("rotation columns are parallel")
    v2 = u2 - np.dot(b1, u2) * b1
    b2 = v2 / np.linalg.norm(v2)
    b3 = np.cross(b1, b2)
    return np.column_stack((b1, b2, b3))


def to6d(r: np.ndarray) -> np.ndarray:
    """First two columns of a rotation matrix, as six scalars."""
    r = np.asarray(r, dtype=float)
    return np.concatenate((r[:, 0], r[:, 1]))


def logmap(r: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix (principal logarithm).

    Returns omega with ``expmap(omega) == r`` and ``norm(omega)`` in [0, pi].
    Three regimes:

    * generic: omega = theta * w / |w| with w the skew part of r,
    * theta < SMALL_ANGLE: series w * (1 + theta^2 / 12),
    * theta within NEAR_PI of pi: axis from the dominant column of
      (r + I)/2, oriented by the skew part when it is informative and
      otherwise by the convention that the first nonzero component of the
      axis is positive.
    """
    # w = sin(theta) * axis; trace = 1 + 2 cos(theta).
    w = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]]) * 0.5
    s = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    c = (r[0, 0] + r[1, 1] + r[2, 2] - 1.0) * 0.5
    theta = math.atan2(s, c)

    if theta < SMALL_ANGLE:
        return w * (1.0 + theta * theta / 12.0)

    if math.pi - theta < NEAR_PI:
        # At theta == pi, (r + I)/2 == axis * axis^T; the largest diagonal
        # entry marks a column proportional to the axis. Symmetrizing first
        # changes nothing mathematically (the true matrix is symmetric here)
        # but makes the extracted axis bitwise identical for r and r.T, so
        # the kernel stays exactly symmetric in its arguments.
        b = (r + r.T + 2.0 * _EYE3) * 0.25
        j = int(np.argmax(np.diagonal(b)))
        axis = b[:, j] / np.linalg.norm(b[:, j])
        if s > 1e-12:
            # Below pi the skew part still carries the sign of the axis.
            if np.dot(axis, w) < 0.0:
                axis = -axis
        else:
            axis = _canonical_axis_sign(axis)
        return axis * theta

    return w * (theta / s)


def _canonical_axis_sign(axis: np.ndarray) -> np.ndarray:
    """Antipodal representative with the first nonzero component positive."""
    for x in axis:
        if x != 0.0:
            return axis if x > 0.0 else -axis
    return axis


def expmap(omega: np.ndarray) -> np.ndarray:
    """Rotation matrix of an axis-angle vector (Rodrigues' formula)."""
    omega = np.asarray(omega, dtype=float)
    theta = math.sqrt(float(np.dot(omega, omega)))
    if theta < SMALL_ANGLE:
        # Second-order series; the truncation error is O(theta^3).
        k = skew(omega)
        return _EYE3 + k + 0.5 * (k @ k)
    k = skew(omega / theta)
    return _EYE3 + math.sin(theta) * k + (1.0 - math.cos(theta)) * (k @ k)


def relative_rotation(reference: np.ndarray, target: np.ndarray) -> np.ndarray:
    """reference^T @ target with a fixed summation order.

    Computed so that swapping the arguments yields the exact bitwise
    transpose, which keeps angle computations perfectly symmetric.
    """
    return np.einsum("ki,kj->ij", reference, target)


def geodesic_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Minimal rotation angle aligning two rotation matrices, in [0, pi]."""
    return float(np.linalg.norm(logmap(relative_rotation(a, b))))


def rotation_about_z(angle: float) -> np.ndarray:
    """In-plane rotation about the +Z axis."""
    return expmap(np.array([0.0, 0.0, float(angle)]))
