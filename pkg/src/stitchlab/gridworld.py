"""Lava-grid navigation environment.

A point agent moves on an n x n lattice of streets; every interior unit cell
is a lava pit. Streets are bands of half-width `street_half_width` around the
integer grid lines. Staying inside a pit for `lava_dwell_limit` consecutive
steps kills the agent, as does leaving the world box by more than
`oob_margin`. All operations are pure: they take and return immutable state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

RUNNING = "running"
DEAD_LAVA = "dead_lava"
OUT_OF_BOUNDS = "out_of_bounds"
TIMEOUT = "timeout"
REACHED_GOAL = "reached_goal"


@dataclass(frozen=True)
class GridGeometry:
    n_intersections: int = 6
    spacing: float = 1.0
    street_half_width: float = 0.1

    @property
    def side(self) -> float:
        """World box edge length; the box is [0, side]^2."""
        return (self.n_intersections - 1) * self.spacing

    @property
    def world_bounds(self):
        return (0.0, 0.0), (self.side, self.side)

    @property
    def pit_cells(self):
        """All (n-1)^2 interior unit cells, ordered by (i, j)."""
        m = self.n_intersections - 1
        return [(i, j) for i in range(m) for j in range(m)]

    def pit_center(self, cell) -> np.ndarray:
        i, j = cell
        return np.array([(i + 0.5) * self.spacing, (j + 0.5) * self.spacing])

    def intersections(self):
        n = self.n_intersections
        return [
            np.array([i * self.spacing, j * self.spacing])
            for i in range(n)
            for j in range(n)
        ]

    def edge_intersections(self):
        """Lattice points on the boundary of the grid, row-major order."""
        n = self.n_intersections
        pts = []
        for i in range(n):
            for j in range(n):
                if i in (0, n - 1) or j in (0, n - 1):
                    pts.append(np.array([i * self.spacing, j * self.spacing]))
        return pts

    def corners(self):
        s = self.side
        return [np.array(c, dtype=float) for c in ((0, 0), (s, 0), (0, s), (s, s))]


STREET = "street"
PIT = "pit"
OUTSIDE = "outside"


def locate(geometry: GridGeometry, p) -> tuple:
    """Classify a point as ('street', None), ('pit', (i, j)) or ('outside', None).

    The street band is safe including its boundary; pit interiors are open.
    """
    x, y = float(p[0]), float(p[1])
    s, w = geometry.spacing, geometry.street_half_width
    side = geometry.side
    if not (0.0 <= x <= side and 0.0 <= y <= side):
        return (OUTSIDE, None)
    # Distance to the nearest grid line along each axis.
    dx = abs(x / s - round(x / s)) * s
    dy = abs(y / s - round(y / s)) * s
    if dx <= w or dy <= w:
        return (STREET, None)
    m = geometry.n_intersections - 1
    i = min(int(x / s), m - 1)
    j = min(int(y / s), m - 1)
    return (PIT, (i, j))


@dataclass(frozen=True)
class EnvConfig:
    T: int = 500
    step_max: float = 0.025
    lava_dwell_limit: int = 10
    goal_radius: float = 0.15
    goal: Optional[tuple] = None
    oob_margin: float = 0.25
    geometry: GridGeometry = field(default_factory=GridGeometry)

    def __post_init__(self):
        if self.T < 1 or self.step_max <= 0 or self.lava_dwell_limit < 1 or self.goal_radius <= 0:
            raise ValueError("invalid EnvConfig: need T>=1, step_max>0, dwell_limit>=1, goal_radius>0")


@dataclass(frozen=True)
class EnvState:
    position: tuple
    step_index: int = 0
    lava_dwell: int = 0
    status: str = RUNNING


def reset(config: EnvConfig, start) -> EnvState:
    x, y = float(start[0]), float(start[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError(f"start position must be finite, got {start}")
    region, cell = locate(config.geometry, (x, y))
    if region == OUTSIDE:
        raise ValueError(f"start {(x, y)} is outside the world box")
    if region == PIT:
        raise ValueError(f"start {(x, y)} is inside pit {cell}")
    return EnvState(position=(x, y), step_index=0, lava_dwell=0, status=RUNNING)


def clip_action(action, step_max: float) -> tuple:
    ax, ay = float(action[0]), float(action[1])
    n = math.hypot(ax, ay)
    if n > step_max:
        scale = step_max / n
        ax, ay = ax * scale, ay * scale
    return ax, ay


def step(config: EnvConfig, state: EnvState, action) -> EnvState:
    """Advance one step. Displacement is the action clipped to norm<=step_max."""
    if state.status != RUNNING:
        raise ValueError(f"cannot step a terminated environment (status={state.status})")
    ax, ay = clip_action(action, config.step_max)
    if not (math.isfinite(ax) and math.isfinite(ay)):
        raise ValueError(f"action must be finite, got {action}")
    x = state.position[0] + ax
    y = state.position[1] + ay
    step_index = state.step_index + 1

    region, _ = locate(config.geometry, (x, y))
    lava_dwell = state.lava_dwell + 1 if region == PIT else 0

    side = config.geometry.side
    m = config.oob_margin
    if not (-m <= x <= side + m and -m <= y <= side + m):
        status = OUT_OF_BOUNDS
    elif lava_dwell >= config.lava_dwell_limit:
        status = DEAD_LAVA
    elif config.goal is not None and math.hypot(
        x - config.goal[0], y - config.goal[1]
    ) <= config.goal_radius:
        status = REACHED_GOAL
    elif step_index >= config.T:
        status = TIMEOUT
    else:
        status = RUNNING
    return EnvState(position=(x, y), step_index=step_index, lava_dwell=lava_dwell, status=status)


def with_goal(config: EnvConfig, goal) -> EnvConfig:
    return replace(config, goal=(float(goal[0]), float(goal[1])))
