"""Demonstration collection and dataset persistence.

Three generators: corner-to-corner street walks for the unconditional
setting, corner + edge-pair walks for the goal-conditioned setting, and
decagon point-to-point tours for the data-scaling study. All walkers are
rejection-free: per-step Gaussian jitter is projected back into the street
band, so demonstrations never die in the lava.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gridworld, metrics
from .gridworld import EnvConfig, GridGeometry

UNCONDITIONAL = "unconditional"
CONDITIONAL = "conditional"
DECAGON = "decagon"
GENERATED = "generated"

# Fraction of step_max used as the demonstrations' per-step noise std.
NOISE_FRAC = 0.2
# Keep jittered walkers strictly inside the street band by this margin.
BAND_MARGIN = 0.01


@dataclass
class Trajectory:
    """Fixed-horizon state/action arrays with terminal-repeat padding."""

    states: np.ndarray  # [H, 2]
    actions: np.ndarray  # [H, 2]; actions[t] moves states[t] -> states[t+1]
    valid_length: int
    tag: str = ""

    def valid_states(self) -> np.ndarray:
        return self.states[: self.valid_length]


@dataclass
class NormMap:
    """Per-dimension affine map from the world box onto [-1, 1]."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def from_bounds(cls, bounds) -> "NormMap":
        (x0, y0), (x1, y1) = bounds
        return cls(lo=np.array([x0, y0], dtype=float), hi=np.array([x1, y1], dtype=float))

    def encode(self, x: np.ndarray) -> np.ndarray:
        """World -> [-1, 1]; operates on the trailing coordinate axis."""
        return 2.0 * (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo) - 1.0

    def decode(self, z: np.ndarray) -> np.ndarray:
        return (np.asarray(z, dtype=float) + 1.0) * (self.hi - self.lo) / 2.0 + self.lo


@dataclass
class Dataset:
    trajectories: list
    horizon: int
    norm: NormMap
    seed: int
    kind: str
    step_bound: float
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.trajectories)

    def states_array(self) -> np.ndarray:
        return np.stack([t.states for t in self.trajectories])  # [N, H, 2]

    def train_array(self) -> np.ndarray:
        """Normalized [N, 2, H] tensor for the denoiser."""
        return self.norm.encode(self.states_array()).transpose(0, 2, 1)


def normalize(dataset: Dataset) -> np.ndarray:
    return dataset.train_array()


def denormalize(dataset_or_norm, z: np.ndarray) -> np.ndarray:
    """Inverse of `normalize` for [..., 2, H] arrays, back to world units."""
    norm = dataset_or_norm.norm if isinstance(dataset_or_norm, Dataset) else dataset_or_norm
    z = np.asarray(z)
    return np.moveaxis(norm.decode(np.moveaxis(z, -2, -1)), -1, -2)


def _pad_trajectory(points, horizon: int, tag: str) -> Trajectory:
    """Terminal-repeat padding to the training horizon."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n > horizon:
        raise ValueError(f"rollout length {n} exceeds horizon {horizon}")
    states = np.empty((horizon, 2))
    states[:n] = pts
    states[n:] = pts[-1]
    actions = np.zeros((horizon, 2))
    actions[: n - 1] = np.diff(pts, axis=0)
    return Trajectory(states=states, actions=actions, valid_length=n, tag=tag)


def _walk_segment(pos, target, axis: int, geometry: GridGeometry, step_max: float, rng, out):
    """Jittered walk along one street segment toward `target`.

    `axis` is the axis of motion; the perpendicular coordinate is clamped into
    the street band around the segment's grid line.
    """
    w = geometry.street_half_width - BAND_MARGIN
    line = target[1 - axis]
    tol = 0.5 * geometry.street_half_width
    guard = 0
    while abs(target[axis] - pos[axis]) > tol or abs(pos[1 - axis] - line) > tol:
        d = target - pos
        dist = np.hypot(*d)
        base = d / dist * min(step_max, dist)
        a = base + NOISE_FRAC * step_max * rng.standard_normal(2)
        n = np.hypot(*a)
        if n > step_max:
            a *= step_max / n
        nxt = pos + a
        nxt[1 - axis] = np.clip(nxt[1 - axis], line - w, line + w)
        pos = nxt
        out.append(pos.copy())
        guard += 1
        if guard > 100 * int(dist / step_max + 10):
            raise RuntimeError("street walker failed to converge")
    return pos


def _lattice_walk(start_ij, goal_ij, geometry: GridGeometry, step_max: float, rng):
    """Random monotone rectilinear walk between two lattice points.

    At each intersection one of the remaining axis moves is chosen uniformly.
    Returns (points, move_string) where the move string uses '0' for the
    x-axis move and '1' for the y-axis move.
    """
    s = geometry.spacing
    di = goal_ij[0] - start_ij[0]
    dj = goal_ij[1] - start_ij[1]
    steps_x, steps_y = abs(di), abs(dj)
    sign_x = 1 if di >= 0 else -1
    sign_y = 1 if dj >= 0 else -1
    pos = np.array([start_ij[0] * s, start_ij[1] * s], dtype=float)
    out = [pos.copy()]
    moves = []
    cell = list(start_ij)
    while steps_x or steps_y:
        if steps_x and steps_y:
            go_x = bool(rng.integers(2) == 0)
        else:
            go_x = steps_x > 0
        if go_x:
            cell[0] += sign_x
            steps_x -= 1
            moves.append(metrics.RIGHT)
            axis = 0
        else:
            cell[1] += sign_y
            steps_y -= 1
            moves.append(metrics.DOWN)
            axis = 1
        target = np.array([cell[0] * s, cell[1] * s], dtype=float)
        pos = _walk_segment(pos, target, axis, geometry, step_max, rng, out)
    return out, "".join(moves)


def gen_unconditional(
    seed: int,
    n_unique: int,
    geometry: GridGeometry | None = None,
    env: EnvConfig | None = None,
    horizon: int = 512,
) -> Dataset:
    """Corner-to-corner demonstrations, deduplicated by topology signature.

    Draws random down/right street walks from the top-left to the bottom-right
    corner until `n_unique` distinct topologies have been collected; the
    dataset keeps one trajectory per topology.
    """
    if n_unique < 1:
        raise ValueError("n_unique must be >= 1")
    geometry = geometry or GridGeometry()
    env = env or EnvConfig(geometry=geometry)
    n = geometry.n_intersections
    possible = metrics.count_optimal(2 * (n - 1))
    if n_unique > possible:
        raise ValueError(f"asked for {n_unique} unique topologies, only {possible} exist")
    start, goal = (0.0, 0.0), (geometry.side, geometry.side)
    seen = {}
    trajs = []
    attempt = 0
    while len(trajs) < n_unique:
        rng = np.random.default_rng(np.random.SeedSequence([seed, attempt]))
        attempt += 1
        points, moves = _lattice_walk((0, 0), (n - 1, n - 1), geometry, env.step_max, rng)
        if len(points) > env.T:
            continue
        sig = metrics.signature(np.asarray(points), geometry, start, goal, env.goal_radius)
        if sig in seen:
            continue
        seen[sig] = moves
        trajs.append(_pad_trajectory(points, horizon, tag=f"uncond:{moves}"))
    norm = NormMap.from_bounds(geometry.world_bounds)
    return Dataset(
        trajectories=trajs,
        horizon=horizon,
        norm=norm,
        seed=seed,
        kind=UNCONDITIONAL,
        step_bound=env.step_max,
        meta={
            "unique_topologies": len(seen),
            "possible_topologies": possible,
            "move_strings": sorted(seen.values()),
        },
    )


def _visited_lattice_points(traj_states: np.ndarray, points, radius: float):
    """Indices (into `points`) the trajectory passes within `radius` of."""
    pts = np.asarray(points, dtype=float)
    d = np.linalg.norm(traj_states[:, None, :] - pts[None, :, :], axis=2)
    return set(np.nonzero((d <= radius).any(axis=0))[0].tolist())


def gen_conditional(
    seed: int,
    geometry: GridGeometry | None = None,
    env: EnvConfig | None = None,
    horizon: int = 512,
    n_total: int = 233,
    corner_unique: int = 42,
    edge_walks: int = 4,
) -> Dataset:
    """Goal-conditioned demonstration set: corner tours plus edge-pair walks.

    Ingredients: for each of the four corners, up to `corner_unique` unique
    walks to the opposite corner; for each edge intersection, walks to
    `edge_walks` randomly chosen other edge intersections. The collection is
    trimmed (never the edge walks) or extended to exactly `n_total`.
    Records which unordered edge-intersection pairs co-occur inside a single
    trajectory; the complement is the held-out evaluation set.
    """
    geometry = geometry or GridGeometry()
    env = env or EnvConfig(geometry=geometry)
    n = geometry.n_intersections
    rng_master = np.random.default_rng(np.random.SeedSequence([seed, 0xC0]))
    trajs = []

    corner_cells = [(0, 0), (n - 1, 0), (0, n - 1), (n - 1, n - 1)]
    opposite = {0: 3, 1: 2, 2: 1, 3: 0}
    corner_pool = []
    for ci, cell in enumerate(corner_cells):
        goal_cell = corner_cells[opposite[ci]]
        seen = set()
        attempt = 0
        while len(seen) < corner_unique and attempt < 60 * corner_unique:
            rng = np.random.default_rng(np.random.SeedSequence([seed, 1 + ci, attempt]))
            attempt += 1
            points, moves = _lattice_walk(cell, goal_cell, geometry, env.step_max, rng)
            if len(points) > env.T or moves in seen:
                continue
            seen.add(moves)
            corner_pool.append(
                _pad_trajectory(points, horizon, tag=f"corner{ci}:{moves}")
            )

    edge_cells = [
        (i, j)
        for i in range(n)
        for j in range(n)
        if i in (0, n - 1) or j in (0, n - 1)
    ]
    edge_pool = []
    for ei, cell in enumerate(edge_cells):
        others = [c for c in edge_cells if c != cell]
        pick = rng_master.choice(len(others), size=min(edge_walks, len(others)), replace=False)
        for k, oi in enumerate(pick):
            rng = np.random.default_rng(np.random.SeedSequence([seed, 100 + ei, k]))
            points, moves = _lattice_walk(cell, others[int(oi)], geometry, env.step_max, rng)
            if len(points) > env.T:
                continue
            edge_pool.append(
                _pad_trajectory(points, horizon, tag=f"edge{cell}->{others[int(oi)]}")
            )

    # Exact total: trim the corner pool evenly, or extend it with more walks.
    n_corner = n_total - len(edge_pool)
    if n_corner < 0:
        raise ValueError(f"n_total {n_total} smaller than the edge-walk count {len(edge_pool)}")
    if len(corner_pool) >= n_corner:
        keep = np.linspace(0, len(corner_pool) - 1, n_corner).round().astype(int)
        corner_pool = [corner_pool[i] for i in sorted(set(keep.tolist()))]
        extra = 0
        while len(corner_pool) < n_corner:  # collisions in rounding
            corner_pool.append(trajs_extend_corner(geometry, env, horizon, seed, 7000 + extra))
            extra += 1
    else:
        extra = 0
        while len(corner_pool) < n_corner:
            corner_pool.append(trajs_extend_corner(geometry, env, horizon, seed, 9000 + extra))
            extra += 1
    trajs = corner_pool + edge_pool

    # Co-occurrence of edge intersections within single trajectories.
    edge_points = [np.array([i * geometry.spacing, j * geometry.spacing]) for i, j in edge_cells]
    seen_pairs = set()
    for t in trajs:
        vis = sorted(_visited_lattice_points(t.valid_states(), edge_points, env.goal_radius))
        for a_idx in range(len(vis)):
            for b_idx in range(a_idx + 1, len(vis)):
                seen_pairs.add((vis[a_idx], vis[b_idx]))
    all_pairs = {(a, b) for a in range(len(edge_cells)) for b in range(a + 1, len(edge_cells))}
    held_out = sorted(all_pairs - seen_pairs)

    norm = NormMap.from_bounds(geometry.world_bounds)
    return Dataset(
        trajectories=trajs,
        horizon=horizon,
        norm=norm,
        seed=seed,
        kind=CONDITIONAL,
        step_bound=env.step_max,
        meta={
            "edge_cells": [list(c) for c in edge_cells],
            "seen_pairs": sorted([list(p) for p in seen_pairs]),
            "held_out_pairs": [list(p) for p in held_out],
        },
    )


def trajs_extend_corner(geometry, env, horizon, seed, salt) -> Trajectory:
    """One extra top-left corner walk (used to pad the conditional set)."""
    n = geometry.n_intersections
    rng = np.random.default_rng(np.random.SeedSequence([seed, 31337, salt]))
    points, moves = _lattice_walk((0, 0), (n - 1, n - 1), geometry, env.step_max, rng)
    return _pad_trajectory(points, horizon, tag=f"corner0+:{moves}")


def decagon_vertices(center, radius: float) -> np.ndarray:
    c = np.asarray(center, dtype=float)
    ang = 2.0 * np.pi * np.arange(10) / 10.0
    return c + radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def gen_decagon(
    seed: int,
    n: int,
    horizon: int = 512,
    center=(2.5, 2.5),
    radius: float = 2.5,
    episode_steps: int = 500,
    n_visits: int = 5,
    noise_std: float | None = None,
    bounds=None,
) -> Dataset:
    """Point-to-point tours of a regular decagon's vertices.

    Each trajectory visits `n_visits` vertices (no consecutive repeats,
    non-consecutive repeats allowed), moving between them with the same
    Gaussian jitter as the grid walkers, over `episode_steps` steps split
    evenly across the legs, then terminal-padded to the horizon.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    verts = decagon_vertices(center, radius)
    legs = n_visits - 1
    steps_per_leg = episode_steps // legs
    if noise_std is None:
        noise_std = NOISE_FRAC * 0.025
    trajs = []
    tuples = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        tour = [int(rng.integers(10))]
        for _ in range(legs):
            step_choices = [v for v in range(10) if v != tour[-1]]
            tour.append(int(step_choices[rng.integers(9)]))
        pos = verts[tour[0]].copy()
        points = [pos.copy()]
        for leg in range(legs):
            target = verts[tour[leg + 1]]
            for s in range(steps_per_leg):
                remaining = steps_per_leg - s
                a = (target - pos) / remaining + noise_std * rng.standard_normal(2)
                pos = pos + a
                points.append(pos.copy())
        trajs.append(_pad_trajectory(points, horizon, tag="tour:" + "-".join(map(str, tour))))
        tuples.append(tuple(tour))
    if bounds is None:
        bounds = ((center[0] - radius, center[1] - radius), (center[0] + radius, center[1] + radius))
    norm = NormMap.from_bounds(bounds)
    max_leg = 2.0 * radius
    return Dataset(
        trajectories=trajs,
        horizon=horizon,
        norm=norm,
        seed=seed,
        kind=DECAGON,
        step_bound=max_leg / steps_per_leg + 5 * noise_std,
        meta={
            "vertices": verts.tolist(),
            "tours": [list(t) for t in tuples],
            "n_visits": n_visits,
            "keypoint_eps": 0.1 * radius,
        },
    )


def positional_augment(traj: Trajectory, seed_or_rng) -> Trajectory:
    """Random temporal shift: drop a uniform prefix, repeat the terminal state.

    The split index s is uniform on [0, valid_length-1]; s=0 returns an
    identical trajectory, s=valid_length-1 a constant one.
    """
    if traj.valid_length < 2:
        raise ValueError("positional_augment needs valid_length >= 2")
    rng = (
        seed_or_rng
        if isinstance(seed_or_rng, np.random.Generator)
        else np.random.default_rng(seed_or_rng)
    )
    H = len(traj.states)
    s = int(rng.integers(traj.valid_length))
    new_valid = traj.valid_length - s
    states = np.empty_like(traj.states)
    states[:new_valid] = traj.states[s : traj.valid_length]
    states[new_valid:] = traj.states[traj.valid_length - 1]
    actions = np.zeros_like(traj.actions)
    actions[: new_valid - 1] = traj.actions[s : traj.valid_length - 1]
    return Trajectory(states=states, actions=actions, valid_length=new_valid, tag=f"{traj.tag}|shift{s}")


def replay_in_env(traj: Trajectory, env: EnvConfig, goal=None) -> str:
    """Open-loop replay of recorded actions; returns the terminal status."""
    cfg = gridworld.with_goal(env, goal) if goal is not None else env
    state = gridworld.reset(cfg, traj.states[0])
    for t in range(len(traj.actions)):
        state = gridworld.step(cfg, state, traj.actions[t])
        if state.status != gridworld.RUNNING:
            return state.status
    return state.status


# ---------------------------------------------------------------------------
# Dataset container: fixed binary layout + JSON sidecar with the metadata.

_MAGIC = b"STLD"
_VERSION = 1


def save_dataset(ds: Dataset, path) -> None:
    path = Path(path)
    n = len(ds.trajectories)
    kind = ds.kind.encode("ascii")[:16].ljust(16, b"\0")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", _VERSION))
        f.write(kind)
        f.write(struct.pack("<IIIq", ds.horizon, n, 2, ds.seed))
        f.write(struct.pack("<d", ds.step_bound))
        f.write(struct.pack("<2d", *ds.norm.lo))
        f.write(struct.pack("<2d", *ds.norm.hi))
        lengths = np.array([t.valid_length for t in ds.trajectories], dtype="<u4")
        f.write(lengths.tobytes())
        states = np.stack([t.states for t in ds.trajectories]).astype("<f8")
        actions = np.stack([t.actions for t in ds.trajectories]).astype("<f8")
        f.write(states.tobytes())
        f.write(actions.tobytes())
    sidecar = {
        "kind": ds.kind,
        "n": n,
        "horizon": ds.horizon,
        "seed": ds.seed,
        "tags": [t.tag for t in ds.trajectories],
        "meta": ds.meta,
    }
    Path(str(path) + ".meta.json").write_text(json.dumps(sidecar, indent=1, sort_keys=True))


def load_dataset(path) -> Dataset:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not a dataset container (bad magic)")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    kind = raw[8:24].rstrip(b"\0").decode("ascii")
    H, n, dim, seed = struct.unpack_from("<IIIq", raw, 24)
    off = 24 + struct.calcsize("<IIIq")
    (step_bound,) = struct.unpack_from("<d", raw, off)
    off += 8
    lo = np.frombuffer(raw, dtype="<f8", count=2, offset=off).copy()
    off += 16
    hi = np.frombuffer(raw, dtype="<f8", count=2, offset=off).copy()
    off += 16
    lengths = np.frombuffer(raw, dtype="<u4", count=n, offset=off)
    off += 4 * n
    states = np.frombuffer(raw, dtype="<f8", count=n * H * dim, offset=off).reshape(n, H, dim)
    off += 8 * n * H * dim
    actions = np.frombuffer(raw, dtype="<f8", count=n * H * dim, offset=off).reshape(n, H, dim)
    tags = [""] * n
    meta = {}
    sidecar = Path(str(path) + ".meta.json")
    if sidecar.exists():
        side = json.loads(sidecar.read_text())
        tags = side.get("tags", tags)
        meta = side.get("meta", {})
    trajs = [
        Trajectory(
            states=states[i].copy(),
            actions=actions[i].copy(),
            valid_length=int(lengths[i]),
            tag=tags[i],
        )
        for i in range(n)
    ]
    return Dataset(
        trajectories=trajs,
        horizon=H,
        norm=NormMap(lo=lo, hi=hi),
        seed=seed,
        kind=kind,
        step_bound=step_bound,
        meta=meta,
    )
