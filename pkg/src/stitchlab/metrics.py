"""Topological trajectory signatures and evaluation statistics.

A trajectory between two anchors splits the lava pits into the set it keeps
on one side and the set on the other; closing the curve with the straight
chord from its end back to its start turns that split into point-in-polygon
parity of each pit center. Two trajectories with the same anchors are
topologically distinct exactly when their signatures differ.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .gridworld import GridGeometry

RIGHT = "0"
DOWN = "1"


@dataclass(frozen=True)
class TopologySignature:
    """One bit per pit cell, ordered by (i, j); True = pit enclosed."""

    bits: tuple

    def __len__(self):
        return len(self.bits)


def _crossing_parity(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Even-odd ray-crossing parity of each center against the closed polyline.

    points: [T, 2] polygon vertices (closing edge last->first implied);
    centers: [P, 2]. Returns bool [P]. Uses the half-open vertical rule with a
    +x ray, which is robust at shared vertices; degenerate and horizontal
    edges never register a crossing.
    """
    p1 = points
    p2 = np.roll(points, -1, axis=0)
    y1, y2 = p1[:, 1:2], p2[:, 1:2]  # [E, 1]
    yc = centers[None, :, 1]  # [1, P]
    straddle = (y1 > yc) != (y2 > yc)  # [E, P]
    dy = y2 - y1
    dy = np.where(dy == 0.0, 1.0, dy)  # masked by straddle anyway
    xint = p1[:, 0:1] + (yc - y1) * (p2[:, 0:1] - p1[:, 0:1]) / dy
    crossings = (straddle & (xint > centers[None, :, 0])).sum(axis=0)
    return (crossings % 2).astype(bool)


def _winding_inside(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Independent inside-test: summed signed angles (winding number != 0)."""
    out = np.zeros(len(centers), dtype=bool)
    for i, c in enumerate(centers):
        d = points - c
        ang = np.arctan2(d[:, 1], d[:, 0])
        dang = np.diff(np.concatenate([ang, ang[:1]]))
        dang = (dang + np.pi) % (2 * np.pi) - np.pi
        out[i] = round(dang.sum() / (2 * np.pi)) != 0
    return out


def signature(
    traj: np.ndarray,
    geometry: GridGeometry,
    start,
    goal,
    anchor_radius: float = 0.15,
    method: str = "raycast",
) -> TopologySignature:
    """Pit-split signature of a start->goal trajectory.

    `traj` is the valid [T, 2] portion of the path. Rejects trajectories whose
    endpoints are not within `anchor_radius` of the anchors, since signatures
    are only comparable for matching anchors.
    """
    traj = np.asarray(traj, dtype=float)
    if traj.ndim != 2 or traj.shape[1] != 2 or len(traj) < 2:
        raise ValueError(f"trajectory must be [T>=2, 2], got {traj.shape}")
    if np.hypot(*(traj[0] - np.asarray(start, dtype=float))) > anchor_radius:
        raise ValueError("trajectory does not begin at the start anchor")
    if np.hypot(*(traj[-1] - np.asarray(goal, dtype=float))) > anchor_radius:
        raise ValueError("trajectory does not end at the goal anchor")
    centers = np.array([geometry.pit_center(c) for c in geometry.pit_cells])
    if method == "raycast":
        inside = _crossing_parity(traj, centers)
    elif method == "winding":
        inside = _winding_inside(traj, centers)
    else:
        raise ValueError(f"unknown signature method '{method}'")
    return TopologySignature(bits=tuple(bool(b) for b in inside))


def count_optimal(n_moves: int) -> int:
    """Number of monotone corner-to-corner paths with n_moves total moves."""
    if n_moves % 2 != 0:
        raise ValueError(f"n_moves must be even, got {n_moves}")
    return math.comb(n_moves, n_moves // 2)


def enumerate_optimal(n_moves: int) -> set:
    """All balanced binary move strings ('0' right, '1' down) of length n_moves."""
    if n_moves % 2 != 0:
        raise ValueError(f"n_moves must be even, got {n_moves}")
    if n_moves > 20:
        raise ValueError("enumeration capped at n_moves <= 20")
    half = n_moves // 2
    out = set()
    for down_positions in combinations(range(n_moves), half):
        s = [RIGHT] * n_moves
        for i in down_positions:
            s[i] = DOWN
        out.add("".join(s))
    return out


def moves_to_polyline(moves: str, geometry: GridGeometry, start=(0.0, 0.0)) -> np.ndarray:
    """Lattice polyline of a move string starting at `start` (right=+x, down=+y)."""
    p = [np.asarray(start, dtype=float)]
    s = geometry.spacing
    for ch in moves:
        d = np.array([s, 0.0]) if ch == RIGHT else np.array([0.0, s])
        p.append(p[-1] + d)
    return np.stack(p)


def optimal_signature_set(geometry: GridGeometry) -> dict:
    """Signature of every monotone corner-to-corner street path.

    Returns {move_string: TopologySignature}; the signature values form the
    'possible trajectory space' used as a coverage denominator.
    """
    n_moves = 2 * (geometry.n_intersections - 1)
    start = (0.0, 0.0)
    goal = (geometry.side, geometry.side)
    out = {}
    for moves in sorted(enumerate_optimal(n_moves)):
        poly = moves_to_polyline(moves, geometry, start)
        out[moves] = signature(poly, geometry, start, goal)
    return out


def coverage(generated: Iterable, training: Iterable, total_possible) -> float:
    """Fraction of the unseen-but-possible signature space that was generated.

    `total_possible` is either the size of the possible space (novel
    signatures are then assumed to lie inside it) or the possible signature
    collection itself, in which case generations outside the space are
    ignored. Result is always in [0, 1].
    """
    train = set(training)
    gen = set(generated)
    if isinstance(total_possible, int):
        n_possible = total_possible
        novel = gen - train
    else:
        possible = set(total_possible)
        n_possible = len(possible)
        novel = (gen & possible) - train
    if n_possible < len(train):
        raise ValueError(f"total_possible {n_possible} < |training| {len(train)}")
    denom = n_possible - len(train)
    if denom == 0:
        return 0.0
    return min(len(novel), denom) / denom


@dataclass(frozen=True)
class CompletionStats:
    rate: float
    sigma: float
    n: int

    def bound(self, k: float = 3.0) -> float:
        return k * self.sigma

    def __str__(self):
        return f"{self.rate:.4f} +/- {3 * self.sigma:.4f} (3-sigma, n={self.n})"


def completion_stats(results: Sequence[bool]) -> CompletionStats:
    """Binomial success rate with sigma = sqrt(p(1-p)/n)."""
    n = len(results)
    if n < 1:
        raise ValueError("completion_stats needs at least one result")
    p = float(sum(bool(r) for r in results)) / n
    return CompletionStats(rate=p, sigma=math.sqrt(p * (1.0 - p) / n), n=n)


def decagon_keypoints(traj: np.ndarray, vertices: np.ndarray, eps: float) -> tuple:
    """Ordered vertex indices a trajectory visits (enters radius eps of).

    Consecutive duplicates are collapsed. The caller decides validity (the
    generators produce 5-visit tours).
    """
    traj = np.asarray(traj, dtype=float)
    vertices = np.asarray(vertices, dtype=float)
    d = np.linalg.norm(traj[:, None, :] - vertices[None, :, :], axis=2)  # [T, V]
    near = d <= eps
    seq = []
    for t in range(len(traj)):
        hits = np.nonzero(near[t])[0]
        if len(hits) == 0:
            continue
        v = int(hits[np.argmin(d[t, hits])])
        if not seq or seq[-1] != v:
            seq.append(v)
    return tuple(seq)


@dataclass(frozen=True)
class NoveltyResult:
    novelty: float
    n_valid: int
    n_invalid: int


def novelty_rate(tuples: Sequence[tuple], training: Iterable, expected_len: int = 5) -> NoveltyResult:
    """Fraction of valid generated visit-tuples absent from the training set.

    Tuples with a visit count different from `expected_len` are excluded from
    the rate but counted.
    """
    train = set(tuple(t) for t in training)
    valid = [tuple(t) for t in tuples if len(t) == expected_len]
    n_invalid = len(tuples) - len(valid)
    if not valid:
        return NoveltyResult(novelty=0.0, n_valid=0, n_invalid=n_invalid)
    novel = sum(1 for t in valid if t not in train)
    return NoveltyResult(novelty=novel / len(valid), n_valid=len(valid), n_invalid=n_invalid)
