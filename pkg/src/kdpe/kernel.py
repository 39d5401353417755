"""Manifold-aware Gaussian kernel over end-effector actions.

An action is a Cartesian position, a rotation matrix, and a gripper scalar.
The kernel is a Gaussian in a 7-dimensional difference vector that subtracts
position and gripper in Euclidean space and rotation in the SO(3) tangent
space (axis-angle of the relative rotation). The covariance is diagonal with
one scale per component.

All density math is done in the natural-log domain; ``exp`` is applied only
at the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .errors import ValidationError

# Dimension of the kernel difference vector: 3 position + 3 rotation
# tangent + 1 gripper. This drives the Gaussian normalization constant.
DELTA_DIM = 7

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Bandwidths:
    """Per-component kernel scales defining the diagonal covariance.

    Defaults are the production values: 0.05 m for position, 0.25 rad for
    rotation, 1.0 aperture unit for the gripper.
    """

    sigma_pos: float = 0.05
    sigma_rot: float = 0.25
    sigma_grip: float = 1.0

    def __post_init__(self):
        for name in ("sigma_pos", "sigma_rot", "sigma_grip"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be strictly positive, got {v!r}")

    @property
    def log_det(self) -> float:
        """log |H| for H = diag(sigma_pos^2 I3, sigma_rot^2 I3, sigma_grip^2)."""
        return 6.0 * math.log(self.sigma_pos) + 6.0 * math.log(self.sigma_rot) \
            + 2.0 * math.log(self.sigma_grip)

    @property
    def log_normalizer(self) -> float:
        """log of the Gaussian normalization constant (2 pi)^(-7/2) |H|^(-1/2)."""
        return -0.5 * (DELTA_DIM * _LOG_2PI + self.log_det)

    def to_dict(self) -> dict:
        return {
            "sigma_pos": self.sigma_pos,
            "sigma_rot": self.sigma_rot,
            "sigma_grip": self.sigma_grip,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Bandwidths":
        return cls(
            sigma_pos=float(d["sigma_pos"]),
            sigma_rot=float(d["sigma_rot"]),
            sigma_grip=float(d["sigma_grip"]),
        )


DEFAULT_BANDWIDTHS = Bandwidths()


@dataclass(frozen=True, eq=False)
class Action:
    """One end-effector command: position, rotation, gripper aperture.

    ``rotation_6d`` is the serialization form of the rotation (the raw two
    columns an external policy emitted, or the first two columns of
    ``rotation`` when the action was built from a matrix). Keeping it makes
    file round trips bit exact; all kernel math uses ``rotation`` only.
    """

    position: np.ndarray
    rotation: np.ndarray
    gripper: float
    rotation_6d: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(3)
        rot = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        grip = float(self.gripper)
        if not (np.all(np.isfinite(pos)) and math.isfinite(grip)):
            raise ValidationError("action scalars must be finite")
        if not geometry.is_rotation(rot):
            raise ValidationError("rotation is not a valid rotation matrix")
        r6 = self.rotation_6d
        r6 = geometry.to6d(rot) if r6 is None else np.asarray(r6, dtype=float).reshape(6)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "gripper", grip)
        object.__setattr__(self, "rotation_6d", r6)

    @classmethod
    def from_6d(cls, position, rotation_6d, gripper) -> "Action":
        """Build from a raw 6D rotation, keeping the raw scalars for export.

        Raises DegenerateRotation when the 6D input cannot be orthonormalized.
        """
        r6 = np.asarray(rotation_6d, dtype=float).reshape(6)
        return cls(position=position, rotation=geometry.from6d(r6), gripper=gripper,
                   rotation_6d=r6)

    def scalars(self) -> np.ndarray:
        """The 10 serialized scalars: position, 6D rotation, gripper."""
        return np.concatenate((self.position, self.rotation_6d, [self.gripper]))


@dataclass(frozen=True, eq=False)
class Delta:
    """Componentwise difference between two actions.

    ``rotation`` is the axis-angle of the relative rotation and has norm at
    most pi; ``position`` and ``gripper`` are plain Euclidean differences.
    """

    position: np.ndarray
    rotation: np.ndarray
    gripper: float


def delta(a: Action, b: Action) -> Delta:
    """Manifold-aware difference a - b."""
    drot = geometry.logmap(geometry.relative_rotation(b.rotation, a.rotation))
    return Delta(position=a.position - b.position, rotation=drot,
                 gripper=a.gripper - b.gripper)


def log_kernel(a: Action, b: Action, h: Bandwidths = DEFAULT_BANDWIDTHS) -> float:
    """Natural log of the kernel value between two actions.

    Decomposes as the log normalizer minus half the Mahalanobis distance,
    which itself splits into independent position, rotation, and gripper
    terms. Symmetric in ``a`` and ``b``.
    """
    d = delta(a, b)
    maha = (
        float(np.dot(d.position, d.position)) / (h.sigma_pos * h.sigma_pos)
        + float(np.dot(d.rotation, d.rotation)) / (h.sigma_rot * h.sigma_rot)
        + d.gripper * d.gripper / (h.sigma_grip * h.sigma_grip)
    )
    return h.log_normalizer - 0.5 * maha


def kernel(a: Action, b: Action, h: Bandwidths = DEFAULT_BANDWIDTHS) -> float:
    """Kernel density value between two actions; positive, maximal at a == b."""
    return math.exp(log_kernel(a, b, h))


def pack_actions(actions) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack a sequence of actions into (positions, rotations, grippers)."""
    positions = np.stack([a.position for a in actions])
    rotations = np.stack([a.rotation for a in actions])
    grippers = np.array([a.gripper for a in actions])
    return positions, rotations, grippers


def pairwise_geodesic(rot_a: np.ndarray, rot_b: np.ndarray) -> np.ndarray:
    """(n, m) matrix of rotation angles between two stacks of matrices.

    Uses atan2 of the relative rotation's skew-part norm against its trace,
    which stays accurate over the whole [0, pi] range. The summation order is
    fixed, so the result for (b, a) is the exact transpose.
    """
    # cos(theta) from the Frobenius inner product: tr(Ra^T Rb) = <Ra, Rb>.
    tr = np.einsum("ikl,jkl->ij", rot_a, rot_b)
    c = (tr - 1.0) * 0.5
    # rel[i, j] = Rb_j^T @ Ra_i, so its skew part is sin(theta) * axis.
    rel = np.einsum("jkm,ikl->ijml", rot_b, rot_a)
    w1 = rel[..., 2, 1] - rel[..., 1, 2]
    w2 = rel[..., 0, 2] - rel[..., 2, 0]
    w3 = rel[..., 1, 0] - rel[..., 0, 1]
    s = 0.5 * np.sqrt(w1 * w1 + w2 * w2 + w3 * w3)
    return np.arctan2(s, c)


# Pair count per block when evaluating a kernel matrix; bounds the peak
# memory of the (block, ns, 3, 3) relative-rotation tensor.
_BLOCK_PAIRS = 1_000_000


def _log_kernel_block(qpos, qrot, qgrip, spos, srot, sgrip, h) -> np.ndarray:
    dpos = qpos[:, None, :] - spos[None, :, :]
    sq_pos = np.einsum("ijk,ijk->ij", dpos, dpos)
    theta = pairwise_geodesic(qrot, srot)
    dgrip = qgrip[:, None] - sgrip[None, :]
    maha = (
        sq_pos / (h.sigma_pos * h.sigma_pos)
        + theta * theta / (h.sigma_rot * h.sigma_rot)
        + dgrip * dgrip / (h.sigma_grip * h.sigma_grip)
    )
    return -0.5 * maha


def log_kernel_matrix(
    query: tuple[np.ndarray, np.ndarray, np.ndarray],
    support: tuple[np.ndarray, np.ndarray, np.ndarray],
    h: Bandwidths = DEFAULT_BANDWIDTHS,
    include_normalizer: bool = True,
) -> np.ndarray:
    """(nq, ns) matrix of log kernel values between packed action stacks.

    ``include_normalizer=False`` drops the constant log normalizer; selection
    by argmax or argmin is invariant to this. Large query sets are processed
    in blocks; blocking does not change any value.
    """
    qpos, qrot, qgrip = query
    spos, srot, sgrip = support
    nq = qpos.shape[0]
    ns = spos.shape[0]
    block = max(1, _BLOCK_PAIRS // max(1, ns))
    if nq <= block:
        out = _log_kernel_block(qpos, qrot, qgrip, spos, srot, sgrip, h)
    else:
        out = np.empty((nq, ns))
        for lo in range(0, nq, block):
            hi = min(lo + block, nq)
            out[lo:hi] = _log_kernel_block(
                qpos[lo:hi], qrot[lo:hi], qgrip[lo:hi], spos, srot, sgrip, h)
    if include_normalizer:
        out += h.log_normalizer
    return out
