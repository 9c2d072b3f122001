"""Mechanistic probes: denoising gradient maps, receptive-field estimates,
and the shift-equivariance probe.

All probes run in 64-bit regardless of how the model was trained; weights are
cast up, so architectural zeros stay exact zeros and equivariance deviations
reflect arithmetic noise only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import savgol_filter

from . import autodiff as ad
from . import models as mdl
from .autodiff import Tensor
from .diffusion import DiffusionSchedule
from .models import EqNetSpec


@dataclass
class GradMap:
    """[T_diff x H] mean absolute input-gradients of the center output.

    Row t holds |d(sum_c out[c, center]) / d x_t| averaged over generations
    and input channels, at denoising step t of the reverse process.
    """

    matrix: np.ndarray
    center: int
    n_generations: int
    model_kind: str


def grad_map(
    model: mdl.Model,
    schedule: DiffusionSchedule,
    n: int = 50,
    rng=None,
    horizon: int = 512,
    temperature: float = 0.5,
    chunk: int = 10,
) -> GradMap:
    """Input-gradient map along n reverse-diffusion generations.

    At every denoising step the gradient of the center position's output
    (summed over channels) w.r.t. the current noisy input is recorded; the
    map averages absolute values over generations. Generations use
    per-trajectory RNG streams, so the result is chunking-invariant.
    """
    model = model.astype(np.float64)
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng or 0)
    children = rng.bit_generator.seed_seq.spawn(n)
    center = horizon // 2
    onehot = np.zeros((1, 2, horizon))
    onehot[:, :, center] = 1.0
    acc = np.zeros((schedule.T_diff, horizon))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        gens = [np.random.default_rng(s) for s in children[lo:hi]]
        x = np.stack([g.standard_normal((2, horizon)) for g in gens])
        for t in range(schedule.T_diff - 1, -1, -1):
            xt = Tensor(x, requires_grad=True)
            pred = mdl.denoise_tensor(model, xt, t)
            scalar = ad.tsum(ad.mul(pred, Tensor(onehot)))
            scalar.backward()
            g = xt.grad  # [m, 2, H]
            acc[t] += np.abs(g).mean(axis=1).sum(axis=0)
            x0 = pred.data
            if t > 0:
                mean = schedule.posterior_coef_x0[t] * x0 + schedule.posterior_coef_xt[t] * x
                sigma = temperature * np.sqrt(schedule.posterior_variance[t])
                eps = np.stack([gg.standard_normal((2, horizon)) for gg in gens])
                x = mean + sigma * eps
    return GradMap(matrix=acc / n, center=center, n_generations=n, model_kind=model.spec.kind)


def rf_estimate(gmap: GradMap, pct: float = 75.0) -> np.ndarray:
    """Per-step receptive-field window sizes from a gradient map.

    The threshold is the pct-percentile of all absolute entries of the map;
    each step's window is the smallest center-anchored window containing all
    supra-threshold entries of that row (1 for an empty row). A zero
    threshold falls back to strictly-positive support so structurally zero
    entries never report influence.
    """
    m = np.abs(gmap.matrix)
    H = m.shape[1]
    thresh = np.percentile(m, pct)
    windows = np.ones(m.shape[0], dtype=int)
    for t in range(m.shape[0]):
        row = m[t]
        supra = np.nonzero(row >= thresh if thresh > 0 else row > 0)[0]
        if len(supra) == 0:
            windows[t] = 1
        else:
            windows[t] = min(2 * int(np.max(np.abs(supra - gmap.center))) + 1, H)
    return windows


def savgol(series, window: int = 21, order: int = 3) -> np.ndarray:
    """Savitzky-Golay smoothing; endpoints via polynomial fit on truncated
    windows (scipy's interp mode)."""
    series = np.asarray(series, dtype=float)
    if window % 2 == 0 or window <= order:
        raise ValueError(f"savgol needs odd window > order, got window={window} order={order}")
    if window > len(series):
        raise ValueError(f"window {window} longer than series ({len(series)})")
    return savgol_filter(series, window_length=window, polyorder=order, mode="interp")


def equivariance_probe(
    model: mdl.Model,
    patch_shift: int = 40,
    t: int = 50,
    length: int = 512,
    patch_width: int = 16,
    margin: int | None = None,
    seed: int = 0,
) -> float:
    """Max shift-corrected deviation of a single denoising step.

    Input is zeros with a centered Gaussian patch; the probe denoises the
    patch at its original and shifted positions and compares the outputs
    after un-shifting, excluding windows of `margin` (default: the model's
    architectural half-RF, or the default Eq-Net's for unbounded models)
    around both sequence ends.
    """
    if margin is None:
        margin = model.half_rf if model.half_rf is not None else EqNetSpec().half_receptive_field()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE0]))
    patch = rng.standard_normal((2, patch_width))
    c = length // 2 - patch_width // 2
    if c + patch_width + patch_shift > length or c < 0:
        raise ValueError("patch and shift do not fit the probe length")
    lo, hi = margin, length - margin - patch_shift
    if hi <= lo:
        raise ValueError(
            f"shift {patch_shift} too large for margin {margin} at length {length}"
        )
    x0 = np.zeros((2, length))
    x0[:, c : c + patch_width] = patch
    x1 = np.zeros((2, length))
    x1[:, c + patch_shift : c + patch_shift + patch_width] = patch
    model = model.astype(np.float64)
    y0 = mdl.denoise(model, x0, t)
    y1 = mdl.denoise(model, x1, t)
    dev = np.abs(y0[:, lo:hi] - y1[:, lo + patch_shift : hi + patch_shift])
    return float(dev.max())


def jacobian_band(model: mdl.Model, x: np.ndarray, t: int, out_index: int) -> np.ndarray:
    """|d(sum_c out[c, out_index]) / d x| for one input, [2, H].

    Used to assert exact locality: entries beyond the architectural half-RF
    must be identically zero for the Eq-Net family.
    """
    model = model.astype(np.float64)
    x = np.asarray(x, dtype=np.float64)
    H = x.shape[-1]
    onehot = np.zeros((1, 2, H))
    onehot[:, :, out_index] = 1.0
    xt = Tensor(x[None], requires_grad=True)
    pred = mdl.denoise_tensor(model, xt, t)
    ad.tsum(ad.mul(pred, Tensor(onehot))).backward()
    return np.abs(xt.grad[0])
