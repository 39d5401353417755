"""Trajectory populations: data model, file format, and synthetic generators.

A population is N same-length trajectories sampled for one observation. The
on-disk format is binary and bit exact; rotations are stored in their 6D
two-column form (the policy interchange representation) and validated into
matrices at read time. A lossless JSON mirror of the same schema exists for
UIs and debugging, with scalars carried as decimal strings so that exact
values survive the round trip.
"""

from __future__ import annotations

import base64
import json
import math
import struct
import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import geometry
from .errors import (FormatError, InvalidSpec, IoFailure, KdpeError,
                     ValidationError)
from .kernel import DEFAULT_BANDWIDTHS, Action

MAGIC = b"KDPE"
FORMAT_VERSION = 1
ACTION_DIM = 10  # position(3) + rotation 6d(6) + gripper(1)

# flags bit 0: scalar payload precision, 0 = float64, 1 = float32
_FLAG_F32 = 0x0001
_KNOWN_FLAGS = _FLAG_F32

_HEADER = struct.Struct("<4sHHIIIH")

JSON_FORMAT_NAME = "kdpe-population"


@dataclass(frozen=True, eq=False)
class Trajectory:
    """An ordered sequence of actions plus an opaque policy payload.

    The payload is raw bytes the policy attached to this candidate; it is
    carried through selection untouched so callers can execute the winner.
    """

    actions: tuple[Action, ...]
    payload: bytes = b""

    def __post_init__(self):
        actions = tuple(self.actions)
        if len(actions) < 1:
            raise ValueError("trajectory must contain at least one action")
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "payload", bytes(self.payload))

    def __len__(self) -> int:
        return len(self.actions)


@dataclass(frozen=True, eq=False)
class Population:
    """N same-length trajectories conditioned on one observation.

    Immutable after construction; the packed arrays used by the scoring hot
    path are cached on first access.
    """

    trajectories: tuple[Trajectory, ...]
    observation_id: str = ""
    created_at: float = field(default_factory=time.time)
    precision: str = "f64"

    def __post_init__(self):
        trajectories = tuple(self.trajectories)
        if len(trajectories) < 1:
            raise ValueError("population must contain at least one trajectory")
        t = len(trajectories[0])
        if any(len(traj) != t for traj in trajectories):
            raise ValueError("all trajectories must share the same length")
        if self.precision not in ("f64", "f32"):
            raise ValueError(f"unknown precision {self.precision!r}")
        object.__setattr__(self, "trajectories", trajectories)

    @property
    def n(self) -> int:
        return len(self.trajectories)

    @property
    def t(self) -> int:
        return len(self.trajectories[0])

    @cached_property
    def positions(self) -> np.ndarray:
        """(N, T, 3) positions."""
        return np.stack([[a.position for a in traj.actions]
                         for traj in self.trajectories])

    @cached_property
    def rotations(self) -> np.ndarray:
        """(N, T, 3, 3) rotation matrices."""
        return np.stack([[a.rotation for a in traj.actions]
                         for traj in self.trajectories])

    @cached_property
    def grippers(self) -> np.ndarray:
        """(N, T) gripper scalars."""
        return np.array([[a.gripper for a in traj.actions]
                         for traj in self.trajectories])

    def packed_step(self, step: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Packed (positions, rotations, grippers) of every trajectory at one step."""
        return (self.positions[:, step], self.rotations[:, step],
                self.grippers[:, step])

    def scalar_array(self) -> np.ndarray:
        """(N, T, 10) canonical serialized scalars, float64."""
        out = np.empty((self.n, self.t, ACTION_DIM))
        for i, traj in enumerate(self.trajectories):
            for j, a in enumerate(traj.actions):
                out[i, j] = a.scalars()
        return out


def default_scored_step(t: int, execution_horizon: int = 8) -> int:
    """Index of the last executed action for a stored horizon of ``t`` steps.

    Populations may carry prediction horizons longer than the executed
    prefix; the scored action sits at the end of that prefix.
    """
    return min(execution_horizon, t) - 1


# ---------------------------------------------------------------------------
# Binary format
# ---------------------------------------------------------------------------

def population_to_bytes(pop: Population) -> bytes:
    """Serialize a population to the binary interchange format."""
    obs = pop.observation_id.encode("utf-8")
    if len(obs) > 0xFFFF:
        raise ValueError("observation_id exceeds 65535 UTF-8 bytes")
    flags = _FLAG_F32 if pop.precision == "f32" else 0
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, flags, pop.n, pop.t,
                          ACTION_DIM, len(obs)), obs]
    dtype = "<f4" if pop.precision == "f32" else "<f8"
    parts.append(np.ascontiguousarray(pop.scalar_array(), dtype=dtype).tobytes())
    for traj in pop.trajectories:
        parts.append(struct.pack("<I", len(traj.payload)))
        parts.append(traj.payload)
    return b"".join(parts)


def population_from_bytes(buf: bytes) -> Population:
    """Parse the binary interchange format; strict about every byte.

    Raises:
        FormatError: bad magic, version, unknown flags, bad shape, truncation,
            or trailing bytes.
        ValidationError: NaN or Inf scalars.
        DegenerateRotation: a 6D rotation field cannot be orthonormalized.
    """
    if len(buf) < _HEADER.size:
        raise FormatError("truncated header")
    magic, version, flags, n, t, d, obs_len = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version}")
    if flags & ~_KNOWN_FLAGS:
        raise FormatError(f"unknown flags 0x{flags:04x}")
    if n < 1 or t < 1:
        raise FormatError(f"bad shape N={n} T={t}")
    if d != ACTION_DIM:
        raise FormatError(f"unsupported action dimensionality {d}")
    off = _HEADER.size
    if len(buf) < off + obs_len:
        raise FormatError("truncated observation id")
    try:
        observation_id = buf[off:off + obs_len].decode("utf-8")
    except UnicodeDecodeError as e:
        raise FormatError("observation id is not valid UTF-8") from e
    off += obs_len

    f32 = bool(flags & _FLAG_F32)
    itemsize = 4 if f32 else 8
    count = n * t * ACTION_DIM
    if len(buf) < off + count * itemsize:
        raise FormatError("truncated scalar payload")
    scalars = np.frombuffer(buf, dtype="<f4" if f32 else "<f8",
                            count=count, offset=off)
    off += count * itemsize
    scalars = scalars.astype(np.float64).reshape(n, t, ACTION_DIM)
    if not np.all(np.isfinite(scalars)):
        raise ValidationError("population contains NaN or Inf scalars")

    trajectories = []
    for i in range(n):
        if len(buf) < off + 4:
            raise FormatError("truncated payload length")
        (plen,) = struct.unpack_from("<I", buf, off)
        off += 4
        if len(buf) < off + plen:
            raise FormatError("truncated trajectory payload")
        payload = buf[off:off + plen]
        off += plen
        actions = tuple(
            Action.from_6d(scalars[i, j, 0:3], scalars[i, j, 3:9],
                           scalars[i, j, 9])
            for j in range(t)
        )
        trajectories.append(Trajectory(actions=actions, payload=payload))
    if off != len(buf):
        raise FormatError(f"{len(buf) - off} trailing bytes")
    return Population(trajectories=tuple(trajectories),
                      observation_id=observation_id,
                      precision="f32" if f32 else "f64")


def write_population(pop: Population, sink) -> int:
    """Write the binary format to a path or file-like sink; returns byte count."""
    data = population_to_bytes(pop)
    try:
        if hasattr(sink, "write"):
            sink.write(data)
        else:
            with open(sink, "wb") as f:
                f.write(data)
    except OSError as e:
        raise IoFailure(str(e)) from e
    return len(data)


def read_population(source) -> Population:
    """Read the binary format from a path or file-like source."""
    try:
        if hasattr(source, "read"):
            buf = source.read()
        else:
            with open(source, "rb") as f:
                buf = f.read()
    except OSError as e:
        raise IoFailure(str(e)) from e
    return population_from_bytes(buf)


# ---------------------------------------------------------------------------
# JSON mirror
# ---------------------------------------------------------------------------

def _scalar_to_str(x: float, precision: str) -> str:
    if precision == "f32":
        # exact decimal form of the float32 value; reparsing through
        # float32 reproduces it bit for bit
        return repr(float(np.float32(x)))
    return repr(float(x))


def population_to_json_dict(pop: Population) -> dict:
    """Lossless JSON mirror of the binary schema (scalars as decimal strings)."""
    trajectories = []
    for traj in pop.trajectories:
        actions = [[_scalar_to_str(x, pop.precision) for x in a.scalars()]
                   for a in traj.actions]
        trajectories.append({
            "actions": actions,
            "payload_b64": base64.b64encode(traj.payload).decode("ascii")
            if traj.payload else None,
        })
    return {
        "format": JSON_FORMAT_NAME,
        "version": FORMAT_VERSION,
        "precision": pop.precision,
        "n": pop.n,
        "t": pop.t,
        "d": ACTION_DIM,
        "observation_id": pop.observation_id,
        "trajectories": trajectories,
    }


def population_from_json_dict(doc: dict) -> Population:
    """Parse the JSON mirror, with the same validation as the binary reader."""
    try:
        if doc.get("format") != JSON_FORMAT_NAME:
            raise FormatError(f"bad format tag {doc.get('format')!r}")
        if doc.get("version") != FORMAT_VERSION:
            raise FormatError(f"unsupported version {doc.get('version')!r}")
        precision = doc.get("precision", "f64")
        if precision not in ("f64", "f32"):
            raise FormatError(f"unknown precision {precision!r}")
        n = int(doc["n"])
        t = int(doc["t"])
        if int(doc.get("d", ACTION_DIM)) != ACTION_DIM:
            raise FormatError("unsupported action dimensionality")
        raw_trajs = doc["trajectories"]
        if len(raw_trajs) != n or n < 1:
            raise FormatError("trajectory count does not match header")
        parse = (lambda s: float(np.float32(s))) if precision == "f32" else float
        trajectories = []
        for rt in raw_trajs:
            rows = rt["actions"]
            if len(rows) != t:
                raise FormatError("action count does not match header")
            actions = []
            for row in rows:
                if len(row) != ACTION_DIM:
                    raise FormatError("bad action row length")
                vals = np.array([parse(s) for s in row])
                if not np.all(np.isfinite(vals)):
                    raise ValidationError("population contains NaN or Inf scalars")
                actions.append(Action.from_6d(vals[0:3], vals[3:9], vals[9]))
            payload = base64.b64decode(rt["payload_b64"]) if rt.get("payload_b64") else b""
            trajectories.append(Trajectory(actions=tuple(actions), payload=payload))
        return Population(trajectories=tuple(trajectories),
                          observation_id=str(doc.get("observation_id", "")),
                          precision=precision)
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, KdpeError):
            raise
        raise FormatError(f"malformed population JSON: {e}") from e


def population_to_json(pop: Population) -> str:
    return json.dumps(population_to_json_dict(pop))


def population_from_json(text: str) -> Population:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise FormatError("population JSON must be an object")
    return population_from_json_dict(doc)


# ---------------------------------------------------------------------------
# Synthetic generators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MixtureMode:
    """One mode of a synthetic action mixture."""

    weight: float
    mean: Action
    spread_pos: float = 0.0
    spread_rot: float = 0.0
    spread_grip: float = 0.0


@dataclass(frozen=True)
class MixtureSpec:
    """Multimodal population generator settings.

    Stands in for a generative policy when testing and demoing selection:
    trajectories are drawn from a categorical mixture of Gaussian modes, with
    an optional fraction displaced far from their mode at the final step.
    ``outlier_offset`` is measured in units of the default position
    bandwidth (Mahalanobis distance in position).
    """

    modes: tuple[MixtureMode, ...]
    outlier_rate: float = 0.0
    outlier_offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        if not self.modes:
            raise InvalidSpec("mixture needs at least one mode")
        for m in self.modes:
            if not (math.isfinite(m.weight) and m.weight > 0.0):
                raise InvalidSpec(f"mode weight must be positive, got {m.weight!r}")
            for name in ("spread_pos", "spread_rot", "spread_grip"):
                v = getattr(m, name)
                if not (math.isfinite(v) and v >= 0.0):
                    raise InvalidSpec(f"{name} must be nonnegative, got {v!r}")
        total = math.fsum(m.weight for m in self.modes)
        if abs(total - 1.0) > 1e-9:
            raise InvalidSpec(f"mode weights must sum to 1, got {total!r}")
        if not (0.0 <= self.outlier_rate < 1.0):
            raise InvalidSpec(f"outlier_rate must be in [0, 1), got {self.outlier_rate!r}")
        if not (math.isfinite(self.outlier_offset) and self.outlier_offset >= 0.0):
            raise InvalidSpec("outlier_offset must be finite and nonnegative")

    @classmethod
    def from_json_dict(cls, doc: dict) -> "MixtureSpec":
        try:
            modes = []
            for rm in doc["modes"]:
                mean = Action.from_6d(
                    np.asarray(rm["position"], dtype=float),
                    np.asarray(rm["rotation_6d"], dtype=float),
                    float(rm["gripper"]),
                )
                modes.append(MixtureMode(
                    weight=float(rm["weight"]),
                    mean=mean,
                    spread_pos=float(rm.get("spread_pos", 0.0)),
                    spread_rot=float(rm.get("spread_rot", 0.0)),
                    spread_grip=float(rm.get("spread_grip", 0.0)),
                ))
            return cls(modes=tuple(modes),
                       outlier_rate=float(doc.get("outlier_rate", 0.0)),
                       outlier_offset=float(doc.get("outlier_offset", 0.0)))
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidSpec(f"malformed mixture spec: {e}") from e

    def to_json_dict(self) -> dict:
        return {
            "modes": [{
                "weight": m.weight,
                "position": [float(x) for x in m.mean.position],
                "rotation_6d": [float(x) for x in m.mean.rotation_6d],
                "gripper": m.mean.gripper,
                "spread_pos": m.spread_pos,
                "spread_rot": m.spread_rot,
                "spread_grip": m.spread_grip,
            } for m in self.modes],
            "outlier_rate": self.outlier_rate,
            "outlier_offset": self.outlier_offset,
        }


def generate(spec: MixtureSpec, n: int, t: int, seed: int) -> Population:
    """Draw a synthetic population; fully deterministic per seed.

    The PRNG is PCG64 seeded directly with ``seed``. Per trajectory the draw
    order is: one uniform for the mode choice, then per step three position
    normals, three rotation tangent normals, one gripper normal, then one
    uniform for the outlier gate (plus three normals for the displacement
    direction when the gate fires). Rotation noise right-multiplies the mode
    rotation with the exponential of a tangent draw of scale ``spread_rot``.
    """
    if n < 1 or t < 1:
        raise InvalidSpec(f"population shape must be positive, got n={n} t={t}")
    rng = np.random.Generator(np.random.PCG64(seed))
    cum = np.cumsum([m.weight for m in spec.modes])
    trajectories = []
    for _ in range(n):
        mode = spec.modes[min(int(np.searchsorted(cum, rng.random(), side="right")),
                              len(spec.modes) - 1)]
        actions = []
        for _ in range(t):
            pos = mode.mean.position + mode.spread_pos * rng.standard_normal(3)
            omega = mode.spread_rot * rng.standard_normal(3)
            rot = mode.mean.rotation @ geometry.expmap(omega)
            grip = mode.mean.gripper + mode.spread_grip * rng.standard_normal()
            actions.append(Action(position=pos, rotation=rot, gripper=grip))
        if rng.random() < spec.outlier_rate:
            direction = rng.standard_normal(3)
            direction /= np.linalg.norm(direction)
            last = actions[-1]
            shift = spec.outlier_offset * DEFAULT_BANDWIDTHS.sigma_pos * direction
            actions[-1] = Action(position=last.position + shift,
                                 rotation=last.rotation, gripper=last.gripper)
        trajectories.append(Trajectory(actions=tuple(actions)))
    return Population(trajectories=tuple(trajectories),
                      observation_id=f"synthetic-{seed}")


def quantize_f32(pop: Population) -> Population:
    """Population with every scalar rounded to float32 and precision "f32".

    Rebuilding actions from the rounded serialized scalars makes the binary
    f32 layout lossless for the result: every stored value is exactly
    representable, so write and read round trips are bit exact.
    """
    trajectories = []
    for traj in pop.trajectories:
        actions = tuple(
            Action.from_6d(
                np.float32(a.position).astype(np.float64),
                np.float32(a.rotation_6d).astype(np.float64),
                float(np.float32(a.gripper)),
            )
            for a in traj.actions
        )
        trajectories.append(Trajectory(actions=actions, payload=traj.payload))
    return Population(trajectories=tuple(trajectories),
                      observation_id=pop.observation_id,
                      created_at=pop.created_at, precision="f32")


# Planar six-action demo: three open-gripper and three closed-gripper poses
# in the world XY plane, each group spanning in-plane angles 0, 45 and 90
# degrees. Gripper open is +1.0, closed is -1.0.
GRIPPER_OPEN = 1.0
GRIPPER_CLOSED = -1.0

_DEMO_POSES = (
    # (x, y, z), in-plane angle (rad), gripper
    ((-0.15, 0.10, 0.0), 0.0, GRIPPER_OPEN),
    ((0.00, 0.15, 0.0), math.pi / 4, GRIPPER_OPEN),
    ((0.15, 0.10, 0.0), math.pi / 2, GRIPPER_OPEN),
    ((-0.15, -0.10, 0.0), 0.0, GRIPPER_CLOSED),
    ((0.00, -0.15, 0.0), math.pi / 4, GRIPPER_CLOSED),
    ((0.15, -0.10, 0.0), math.pi / 2, GRIPPER_CLOSED),
)


def fig1_population() -> Population:
    """Six single-step planar actions used by the heatmap demo and UI.

    Fixed documented poses: all positions lie in the XY plane, orientations
    are rotations about +Z, and the two gripper states split the actions
    into two clusters of three.
    """
    trajectories = tuple(
        Trajectory(actions=(Action(position=np.array(pos),
                                   rotation=geometry.rotation_about_z(angle),
                                   gripper=grip),))
        for pos, angle, grip in _DEMO_POSES
    )
    return Population(trajectories=trajectories, observation_id="planar-demo")
