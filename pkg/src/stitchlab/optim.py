"""AdamW with decoupled weight decay, EMA shadow weights, cosine LR schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimState:
    """Per-parameter Adam moment accumulators plus the step counter."""

    base_lr: float = 2e-4
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params: dict, opt: OptimState, lr: float) -> None:
    """One AdamW update in place over a name->Tensor parameter dict.

    Decay is decoupled: p *= (1 - lr*wd) before the bias-corrected moment
    update. Rejects the whole step if any gradient is non-finite.
    """
    if lr < 0:
        raise ValueError(f"negative learning rate {lr}")
    for name, p in params.items():
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter '{name}'")
    opt.step += 1
    t = opt.step
    bc1 = 1.0 - opt.beta1**t
    bc2 = 1.0 - opt.beta2**t
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if name not in opt.m:
            opt.m[name] = np.zeros_like(p.data)
            opt.v[name] = np.zeros_like(p.data)
        m, v = opt.m[name], opt.v[name]
        if opt.weight_decay:
            p.data *= 1.0 - lr * opt.weight_decay
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * (g * g)
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + opt.eps)


def ema_update(shadow: dict, params: dict, rate: float = 0.9999) -> None:
    """shadow <- rate*shadow + (1-rate)*params, in place."""
    for name, p in params.items():
        s = shadow[name]
        s *= rate
        s += (1.0 - rate) * p.data


def cosine_lr(step: int, total_steps: int, base_lr: float) -> float:
    """Cosine decay from base_lr to 0 over total_steps, no warmup."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))
