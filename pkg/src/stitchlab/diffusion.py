"""Discrete 100-step DDPM on clean-prediction with inpainting guidance.

The reverse process samples the standard DDPM posterior around the model's
clean prediction, with the injected noise scaled by a temperature. Inpainting
overwrites masked entries with the target re-noised to the current step after
every denoising step, and with the clean target exactly at the end.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import models
from .autodiff import Tensor
from .optim import OptimState, adamw_step, cosine_lr, ema_update


class TrainingDiverged(RuntimeError):
    """Raised when the training loss goes non-finite."""


@dataclass
class DiffusionSchedule:
    """Per-step noise coefficients of the discrete forward/reverse process."""

    T_diff: int = 100
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    betas: np.ndarray = field(init=False)
    alphas: np.ndarray = field(init=False)
    alpha_bar: np.ndarray = field(init=False)
    alpha_bar_prev: np.ndarray = field(init=False)
    posterior_variance: np.ndarray = field(init=False)
    posterior_coef_x0: np.ndarray = field(init=False)
    posterior_coef_xt: np.ndarray = field(init=False)

    def __post_init__(self):
        self.betas = np.linspace(self.beta_start, self.beta_end, self.T_diff)
        if not (np.all(self.betas > 0) and np.all(self.betas < 1)):
            raise ValueError("betas must lie in (0, 1)")
        self.alphas = 1.0 - self.betas
        self.alpha_bar = np.cumprod(self.alphas)
        self.alpha_bar_prev = np.concatenate([[1.0], self.alpha_bar[:-1]])
        self.posterior_variance = (
            self.betas * (1.0 - self.alpha_bar_prev) / (1.0 - self.alpha_bar)
        )
        self.posterior_coef_x0 = (
            self.betas * np.sqrt(self.alpha_bar_prev) / (1.0 - self.alpha_bar)
        )
        self.posterior_coef_xt = (
            (1.0 - self.alpha_bar_prev) * np.sqrt(self.alphas) / (1.0 - self.alpha_bar)
        )

    def _check_t(self, t):
        t = np.asarray(t)
        if np.any((t < 0) | (t >= self.T_diff)):
            raise ValueError(f"diffusion step {t} outside [0, {self.T_diff})")
        return t


def q_sample(schedule: DiffusionSchedule, x0: np.ndarray, t, eps: np.ndarray) -> np.ndarray:
    """Forward noising: sqrt(ab_t)*x0 + sqrt(1-ab_t)*eps.

    t may be a scalar or one step per batch item ([B] for x0 [B, 2, H]).
    """
    t = schedule._check_t(t)
    ab = schedule.alpha_bar[t]
    if np.ndim(ab) > 0:
        ab = ab.reshape((-1,) + (1,) * (np.ndim(x0) - 1))
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


@dataclass
class InpaintMask:
    """Boolean mask per (channel, position) with normalized target values.

    `values` broadcasts against the batch: [2, H] for a shared target or
    [n, 2, H] for per-sample targets (replanning from different states).
    """

    mask: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values[..., self.mask] if self.values.ndim == 3 else self.values[self.mask])):
            raise ValueError("inpainting targets must be finite where masked")


def start_mask(start_norm, H: int) -> InpaintMask:
    """Fix only sequence position 0 (both channels) to a normalized state."""
    mask = np.zeros((2, H), dtype=bool)
    mask[:, 0] = True
    values = np.zeros((2, H))
    values[:, 0] = np.asarray(start_norm)
    return InpaintMask(mask=mask, values=values)


def goal_mask(start_norm, goal_norm, H: int, repeats: int = 25) -> InpaintMask:
    """Fix position 0 to the start and the last `repeats` positions to the goal."""
    if repeats < 0 or repeats >= H:
        raise ValueError(f"goal repeats {repeats} outside [0, {H})")
    mask = np.zeros((2, H), dtype=bool)
    values = np.zeros((2, H))
    mask[:, 0] = True
    values[:, 0] = np.asarray(start_norm)
    if repeats > 0:
        mask[:, H - repeats :] = True
        values[:, H - repeats :] = np.asarray(goal_norm)[:, None]
    return InpaintMask(mask=mask, values=values)


def _mask_values_for(mask: InpaintMask, n: int) -> np.ndarray:
    v = mask.values
    return v[None].repeat(n, axis=0) if v.ndim == 2 else v


def sample(
    model: models.Model,
    schedule: DiffusionSchedule,
    n: int,
    rng,
    temperature: float = 0.5,
    mask: Optional[InpaintMask] = None,
    horizon: int = 512,
    chunk: int = 128,
) -> np.ndarray:
    """Ancestral reverse-diffusion sampling; returns [n, 2, H] normalized.

    Each trajectory consumes its own RNG stream spawned from `rng`, so the
    result is independent of chunking and parallel-friendly. Temperature
    scales the posterior noise standard deviation; the final step is
    noise-free, and masked entries end exactly at their targets.
    """
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    seed_seq = rng.bit_generator.seed_seq if isinstance(rng, np.random.Generator) else np.random.SeedSequence(rng)
    children = seed_seq.spawn(n)
    out = np.empty((n, 2, horizon))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        gens = [np.random.default_rng(s) for s in children[lo:hi]]
        m = hi - lo
        x = np.stack([g.standard_normal((2, horizon)) for g in gens])
        values = _mask_values_for(mask, n)[lo:hi] if mask is not None else None
        for t in range(schedule.T_diff - 1, -1, -1):
            x0 = models.denoise(model, x, t)
            if t > 0:
                mean = schedule.posterior_coef_x0[t] * x0 + schedule.posterior_coef_xt[t] * x
                sigma = temperature * np.sqrt(schedule.posterior_variance[t])
                eps = np.stack([g.standard_normal((2, horizon)) for g in gens])
                x = mean + sigma * eps
                if mask is not None:
                    ab = schedule.alpha_bar_prev[t]
                    eps_m = np.stack([g.standard_normal((2, horizon)) for g in gens])
                    noised = np.sqrt(ab) * values + np.sqrt(1.0 - ab) * eps_m
                    x = np.where(mask.mask[None], noised, x)
            else:
                x = x0
                if mask is not None:
                    x = np.where(mask.mask[None], values, x)
        out[lo:hi] = x
    return out


def train_step(
    model: models.Model,
    batch: np.ndarray,
    rng,
    opt: OptimState,
    schedule: DiffusionSchedule,
    step: int,
    total_steps: int,
    ema_rate: float = 0.9999,
) -> float:
    """One denoising-MSE gradient step with cosine LR, AdamW and EMA update.

    batch: [B, 2, H] normalized trajectories. Draws one uniform diffusion
    step and one noise sample per item. Raises TrainingDiverged on a
    non-finite loss so the caller can drop a diagnostic checkpoint.
    """
    B = batch.shape[0]
    t = rng.integers(schedule.T_diff, size=B)
    eps = rng.standard_normal(batch.shape)
    x_t = q_sample(schedule, batch, t, eps).astype(model.dtype)
    pred = models.denoise_tensor(model, Tensor(x_t), t)
    diff = pred - Tensor(batch.astype(model.dtype))
    loss = ad.mean(ad.mul(diff, diff))
    loss_val = float(loss.data)
    if not np.isfinite(loss_val):
        raise TrainingDiverged(f"non-finite training loss at step {step}")
    for p in model.params.values():
        p.zero_grad()
    loss.backward()
    lr = cosine_lr(step, total_steps, opt.base_lr)
    adamw_step(model.params, opt, lr)
    ema_update(model.ema, model.params, ema_rate)
    return loss_val
