"""Experiment profiles: the full-scale setup and a desk-scale CI reduction.

`full` mirrors the reference hyperparameters exactly (6x6 grid, horizon 512,
500k gradient steps). `desk` is a reduced 4x4-intersection grid with horizon
128 and small models, sized so the entire pipeline (training included) runs
on a CPU-only box while exercising identical code paths.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict, replace

from .diffusion import DiffusionSchedule
from .gridworld import EnvConfig, GridGeometry
from .models import EqNetSpec, UNetSpec


@dataclass(frozen=True)
class Profile:
    name: str
    # environment
    grid_n: int
    step_max: float
    episode_T: int
    street_half_width: float = 0.1
    lava_dwell_limit: int = 10
    goal_radius: float = 0.15
    oob_margin: float = 0.25
    # diffusion
    horizon: int = 512
    diffusion_steps: int = 100
    temperature: float = 0.5
    goal_repeats: int = 25
    # training
    train_steps: int = 500_000
    batch: int = 128
    base_lr: float = 2e-4
    weight_decay: float = 1e-5
    ema_rate: float = 0.9999
    ckpt_every: int = 50_000
    train_dtype: str = "float32"
    # models
    eq_depth: int = 25
    eq_channels: int = 64
    eq_ker: int = 5
    unet_base: int = 64
    unet_res_blocks: int = 2
    unet_mid_blocks: int = 3
    track_offset: int = 1
    # data
    uncond_unique: int = 42
    cond_total: int = 233
    corner_unique: int = 42
    edge_walks: int = 4
    decagon_episode_steps: int = 500
    # evaluation
    n_samples: int = 800
    n_per_pair: int = 500
    sample_chunk: int = 128
    invdyn_steps: int = 3000

    def geometry(self) -> GridGeometry:
        return GridGeometry(n_intersections=self.grid_n, street_half_width=self.street_half_width)

    def env(self, goal=None) -> EnvConfig:
        return EnvConfig(
            T=self.episode_T,
            step_max=self.step_max,
            lava_dwell_limit=self.lava_dwell_limit,
            goal_radius=self.goal_radius,
            goal=tuple(goal) if goal is not None else None,
            oob_margin=self.oob_margin,
            geometry=self.geometry(),
        )

    def schedule(self) -> DiffusionSchedule:
        return DiffusionSchedule(T_diff=self.diffusion_steps)

    def eqnet_spec(self, ker: int | None = None, posenc: bool = False) -> EqNetSpec:
        return EqNetSpec(
            depth=self.eq_depth, channels=self.eq_channels, ker=ker or self.eq_ker, posenc=posenc
        )

    def unet_spec(self) -> UNetSpec:
        return UNetSpec(
            base_channels=self.unet_base,
            res_blocks=self.unet_res_blocks,
            mid_blocks=self.unet_mid_blocks,
        )

    def decagon_geometry(self) -> dict:
        side = (self.grid_n - 1) * 1.0
        return {
            "center": (side / 2.0, side / 2.0),
            "radius": side / 2.0,
            "episode_steps": self.decagon_episode_steps,
        }


FULL = Profile(
    name="full",
    grid_n=6,
    step_max=0.025,
    episode_T=500,
)

# CPU-scale reduction: same code paths, smaller everything. Step counts and
# widths were tuned so the composition orderings reproduce in CI time.
DESK = Profile(
    name="desk",
    grid_n=4,
    step_max=0.0625,
    episode_T=120,
    horizon=128,
    train_steps=4000,
    batch=32,
    ema_rate=0.999,
    ckpt_every=1000,
    eq_depth=12,
    eq_channels=16,
    unet_base=16,
    unet_res_blocks=1,
    unet_mid_blocks=2,
    uncond_unique=8,
    cond_total=68,
    corner_unique=8,
    edge_walks=3,
    decagon_episode_steps=120,
    invdyn_steps=2000,
)

PROFILES = {"full": FULL, "desk": DESK}


def get_profile(name: str, **overrides) -> Profile:
    if name not in PROFILES:
        raise ValueError(f"unknown profile '{name}' (have {sorted(PROFILES)})")
    p = PROFILES[name]
    return replace(p, **overrides) if overrides else p


def config_hash(obj) -> str:
    """Stable short hash of any JSON-serializable config mapping."""
    if hasattr(obj, "__dataclass_fields__"):
        obj = asdict(obj)
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]
