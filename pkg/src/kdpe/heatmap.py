"""Planar density heatmaps: sweep a probe action over a grid of positions.

Every grid cell is scored as the population log-density of an action whose
position sits at the cell center, whose rotation is the probe angle about
the plane normal, and whose gripper is the probe value. The plane is
configurable; the default is the world XY plane with rotations about +Z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .density import _logsumexp_rows, _resolve_step
from .kernel import DEFAULT_BANDWIDTHS, Bandwidths, log_kernel_matrix
from .population import Population

# plane name -> (first in-plane axis, second in-plane axis, normal axis)
_PLANES = {"xy": (0, 1, 2), "xz": (0, 2, 1), "yz": (1, 2, 0)}


@dataclass(frozen=True)
class HeatmapRequest:
    """A rectangular probe sweep over one plane.

    ``x`` and ``y`` name the two in-plane grid axes (world axes per
    ``plane``); ``offset`` fixes the out-of-plane coordinate. Cell (row,
    col) covers one grid rectangle and is probed at its center.
    """

    x_min: float = -0.25
    x_max: float = 0.25
    y_min: float = -0.25
    y_max: float = 0.25
    resolution_x: int = 64
    resolution_y: int = 64
    angle: float = 0.0
    gripper: float = 1.0
    plane: str = "xy"
    offset: float = 0.0
    step: int | None = None
    bandwidths: Bandwidths = field(default_factory=lambda: DEFAULT_BANDWIDTHS)

    def __post_init__(self):
        if self.plane not in _PLANES:
            raise ValueError(f"unknown plane {self.plane!r}")
        if self.resolution_x < 2 or self.resolution_y < 2:
            raise ValueError("heatmap resolution must be at least 2 per axis")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("heatmap extents must satisfy min < max")
        for name in ("x_min", "x_max", "y_min", "y_max", "angle", "gripper",
                     "offset"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """(x centers, y centers) of the grid cells along each axis."""
        dx = (self.x_max - self.x_min) / self.resolution_x
        dy = (self.y_max - self.y_min) / self.resolution_y
        xs = self.x_min + dx * (np.arange(self.resolution_x) + 0.5)
        ys = self.y_min + dy * (np.arange(self.resolution_y) + 0.5)
        return xs, ys

    def to_dict(self) -> dict:
        return {
            "x_min": self.x_min, "x_max": self.x_max,
            "y_min": self.y_min, "y_max": self.y_max,
            "resolution_x": self.resolution_x,
            "resolution_y": self.resolution_y,
            "angle": self.angle, "gripper": self.gripper,
            "plane": self.plane, "offset": self.offset,
            "step": self.step,
            "bandwidths": self.bandwidths.to_dict(),
        }


def evaluate_heatmap(pop: Population, req: HeatmapRequest) -> dict:
    """Score the probe grid against one population step.

    Returns the request echo plus the row-major grid: ``values[row][col]``
    is the log-density at y index ``row`` (from y_min) and x index ``col``
    (from x_min), flattened row by row, along with the argmax cell.
    """
    step = _resolve_step(pop, req.step)
    ax_x, ax_y, ax_n = _PLANES[req.plane]
    xs, ys = req.cell_centers()
    nq = req.resolution_x * req.resolution_y

    positions = np.empty((nq, 3))
    positions[:, ax_n] = req.offset
    grid_x, grid_y = np.meshgrid(xs, ys)  # both (res_y, res_x)
    positions[:, ax_x] = grid_x.ravel()
    positions[:, ax_y] = grid_y.ravel()

    normal = np.zeros(3)
    normal[ax_n] = 1.0
    rotation = geometry.expmap(req.angle * normal)
    rotations = np.broadcast_to(rotation, (nq, 3, 3))
    grippers = np.full(nq, req.gripper)

    support = pop.packed_step(step)
    k = log_kernel_matrix((positions, rotations, grippers), support,
                          req.bandwidths)
    values = _logsumexp_rows(k) - math.log(pop.n)

    peak = int(np.argmax(values))
    row, col = divmod(peak, req.resolution_x)
    return {
        "request": req.to_dict(),
        "scored_step": step,
        "rows": req.resolution_y,
        "cols": req.resolution_x,
        "values": [float(v) for v in values],
        "argmax": {
            "row": int(row),
            "col": int(col),
            "x": float(xs[col]),
            "y": float(ys[row]),
            "log_density": float(values[peak]),
        },
    }
