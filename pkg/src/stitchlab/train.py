"""Denoiser training loop and the versioned checkpoint container."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import models
from .datagen import Dataset, positional_augment
from .diffusion import DiffusionSchedule, TrainingDiverged, train_step
from .optim import OptimState

CKPT_VERSION = 1


@dataclass
class TrainConfig:
    steps: int = 500_000
    batch: int = 128
    base_lr: float = 2e-4
    weight_decay: float = 1e-5
    ema_rate: float = 0.9999
    seed: int = 0
    augment: bool = False
    ckpt_every: int = 50_000
    log_every: int = 500


def fit(
    model: models.Model,
    dataset: Dataset,
    cfg: TrainConfig,
    schedule: DiffusionSchedule | None = None,
    out_dir=None,
    config_hash: str = "",
) -> dict:
    """Train a denoiser on a dataset; returns {losses, seconds}.

    Checkpoints land in out_dir every cfg.ckpt_every steps plus a final one.
    Positional augmentation (when enabled) draws a fresh temporal shift per
    sample per step. Deterministic given cfg.seed in single-threaded mode.
    """
    schedule = schedule or DiffusionSchedule()
    opt = OptimState(base_lr=cfg.base_lr, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7EA1]))
    base = dataset.train_array()  # [N, 2, H] float64
    trajs = dataset.trajectories
    n = len(trajs)
    losses = []
    t0 = time.time()
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    for step in range(cfg.steps):
        idx = rng.integers(n, size=cfg.batch)
        if cfg.augment:
            batch = np.stack(
                [dataset.norm.encode(positional_augment(trajs[i], rng).states).T for i in idx]
            )
        else:
            batch = base[idx]
        try:
            loss = train_step(model, batch, rng, opt, schedule, step, cfg.steps, cfg.ema_rate)
        except TrainingDiverged:
            if out_dir is not None:
                save_checkpoint(out_dir / "diverged.npz", model, opt, step, config_hash)
            raise
        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            losses.append((step, loss))
        if out_dir is not None and cfg.ckpt_every and (step + 1) % cfg.ckpt_every == 0:
            save_checkpoint(out_dir / f"ckpt_{step + 1:07d}.npz", model, opt, step + 1, config_hash)
    if out_dir is not None:
        save_checkpoint(out_dir / "ckpt_final.npz", model, opt, cfg.steps, config_hash)
    return {"losses": losses, "seconds": time.time() - t0}


def _spec_to_dict(spec) -> dict:
    d = asdict(spec)
    d["kind"] = spec.kind
    if "mults" in d:
        d["mults"] = list(d["mults"])
    return d


def _spec_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind")
    if kind == "eqnet":
        return models.EqNetSpec(**d)
    if kind == "unet":
        d["mults"] = tuple(d["mults"])
        return models.UNetSpec(**d)
    raise ValueError(f"unknown model kind '{kind}' in checkpoint")


def save_checkpoint(path, model: models.Model, opt: OptimState | None, step: int, config_hash: str = ""):
    arrays = {}
    for k, p in model.params.items():
        arrays[f"param/{k}"] = p.data
        arrays[f"ema/{k}"] = model.ema[k]
    if opt is not None:
        for k in opt.m:
            arrays[f"opt.m/{k}"] = opt.m[k]
            arrays[f"opt.v/{k}"] = opt.v[k]
    meta = {
        "version": CKPT_VERSION,
        "step": step,
        "config_hash": config_hash,
        "spec": _spec_to_dict(model.spec),
        "dtype": str(model.dtype),
        "opt": None
        if opt is None
        else {
            "base_lr": opt.base_lr,
            "weight_decay": opt.weight_decay,
            "beta1": opt.beta1,
            "beta2": opt.beta2,
            "eps": opt.eps,
            "step": opt.step,
        },
    }
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path):
    """Returns (model, opt_state_or_None, step, meta)."""
    with np.load(path) as z:
        meta = json.loads(bytes(z["__meta__"]).decode())
        if meta["version"] != CKPT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        spec = _spec_from_dict(meta["spec"])
        dtype = np.dtype(meta["dtype"])
        rebuilt = models.build(spec, seed=0, dtype=dtype)
        for k in rebuilt.params:
            rebuilt.params[k].data[...] = z[f"param/{k}"]
            rebuilt.ema[k][...] = z[f"ema/{k}"]
        opt = None
        if meta["opt"] is not None:
            o = meta["opt"]
            opt = OptimState(
                base_lr=o["base_lr"],
                weight_decay=o["weight_decay"],
                beta1=o["beta1"],
                beta2=o["beta2"],
                eps=o["eps"],
                step=o["step"],
            )
            for k in rebuilt.params:
                if f"opt.m/{k}" in z:
                    opt.m[k] = z[f"opt.m/{k}"].copy()
                    opt.v[k] = z[f"opt.v/{k}"].copy()
        return rebuilt, opt, meta["step"], meta
