"""Denoiser architectures and the inverse-dynamics network.

Three denoisers share one interface: a baseline 1D U-Net (downsampling,
non-local, position-aware), Eq-Net (stacked stride-1 convolutions, local and
positionally equivariant by construction), and Eq-Net with a fixed sinusoidal
position embedding (local but not equivariant). Diffusion time enters every
block as a per-channel bias broadcast across positions, which keeps the
conditioning itself position-independent.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

TIME_DIM = 64
CLAMP = 1.1


@dataclass(frozen=True)
class EqNetSpec:
    depth: int = 25
    channels: int = 64
    ker: int = 5  # kernel expansion rate: blocks between kernel-size bumps
    posenc: bool = False
    in_channels: int = 2
    out_channels: int = 2

    def kernel_schedule(self) -> list:
        """k_b = 3 + 2*floor(b/ker) for block b; small kernels first."""
        if self.depth < 1 or self.ker < 1:
            raise ValueError("EqNetSpec needs depth >= 1 and ker >= 1")
        return [3 + 2 * (b // self.ker) for b in range(self.depth)]

    def half_receptive_field(self) -> int:
        """Architectural half-RF: sum of (k-1)/2 over every convolution.

        Each block has two k_b convolutions; the in/out projections are 1x1
        and contribute nothing.
        """
        return sum(k - 1 for k in self.kernel_schedule())

    kind = "eqnet"


@dataclass(frozen=True)
class UNetSpec:
    base_channels: int = 64
    mults: tuple = (1, 2, 4, 8)
    kernel: int = 5
    res_blocks: int = 2
    mid_blocks: int = 3
    in_channels: int = 2
    out_channels: int = 2

    def __post_init__(self):
        if len(self.mults) != 4:
            raise ValueError("UNetSpec expects four channel multipliers (three downsamplings)")

    kind = "unet"


@dataclass(frozen=True)
class InvDynSpec:
    hidden: int = 256
    layers: int = 2

    kind = "invdyn"


def sinusoidal_table(n: int, dim: int, dtype=np.float64) -> np.ndarray:
    """Fixed sin/cos embedding table, rows = positions, cols = features."""
    pos = np.arange(n, dtype=np.float64)[:, None]
    i = np.arange(dim // 2, dtype=np.float64)[None, :]
    freq = np.exp(-np.log(10000.0) * (2 * i / dim))
    tab = np.empty((n, dim), dtype=np.float64)
    tab[:, 0::2] = np.sin(pos * freq)
    tab[:, 1::2] = np.cos(pos * freq)
    return tab.astype(dtype)


class ParamStore:
    """Ordered name->Tensor parameter dict with fan-in uniform init."""

    def __init__(self, rng: np.random.Generator, dtype=np.float64):
        self.rng = rng
        self.dtype = dtype
        self.params: dict[str, Tensor] = {}

    def weight(self, name: str, shape, fan_in: int) -> Tensor:
        bound = 1.0 / np.sqrt(fan_in)
        data = self.rng.uniform(-bound, bound, size=shape).astype(self.dtype)
        t = Tensor(data, requires_grad=True)
        self.params[name] = t
        return t

    def bias(self, name: str, shape, fan_in: int) -> Tensor:
        return self.weight(name, shape, fan_in)

    def const(self, name: str, shape, value: float) -> Tensor:
        t = Tensor(np.full(shape, value, dtype=self.dtype), requires_grad=True)
        self.params[name] = t
        return t


class Model:
    """A denoiser: spec + parameters + EMA shadow + forward pass."""

    def __init__(self, spec, params: dict, forward_fn, time_table: np.ndarray):
        self.spec = spec
        self.params = params
        self._forward = forward_fn
        self.time_table = time_table
        self.ema = {k: v.data.copy() for k, v in params.items()}

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def param_count(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    @property
    def half_rf(self):
        return self.spec.half_receptive_field() if isinstance(self.spec, EqNetSpec) else None

    def forward(self, x: Tensor, t: np.ndarray) -> Tensor:
        return self._forward(self.params, x, t)

    def ema_view(self) -> "Model":
        """A model sharing this spec but reading the EMA shadow weights."""
        params = {k: Tensor(v, requires_grad=False) for k, v in self.ema.items()}
        m = Model.__new__(Model)
        m.spec = self.spec
        m.params = params
        m._forward = self._forward
        m.time_table = self.time_table
        m.ema = self.ema
        return m

    def astype(self, dtype) -> "Model":
        m = Model.__new__(Model)
        m.spec = self.spec
        m.params = {k: Tensor(v.data.astype(dtype), requires_grad=v.requires_grad) for k, v in self.params.items()}
        m._forward = self._forward
        m.time_table = self.time_table.astype(dtype)
        m.ema = {k: v.astype(dtype) for k, v in self.ema.items()}
        return m


def _time_embedding(params, table, t, prefix="time"):
    """Shared two-layer map on the sinusoidal step embedding -> [B, TIME_DIM]."""
    t = np.atleast_1d(np.asarray(t, dtype=int))
    emb = Tensor(table[t])
    h = ad.mish(ad.dense(emb, params[f"{prefix}.w1"], params[f"{prefix}.b1"]))
    return ad.dense(h, params[f"{prefix}.w2"], params[f"{prefix}.b2"])


def _build_time_mlp(store: ParamStore, prefix="time"):
    store.weight(f"{prefix}.w1", (TIME_DIM, TIME_DIM), TIME_DIM)
    store.bias(f"{prefix}.b1", (TIME_DIM,), TIME_DIM)
    store.weight(f"{prefix}.w2", (TIME_DIM, TIME_DIM), TIME_DIM)
    store.bias(f"{prefix}.b2", (TIME_DIM,), TIME_DIM)


def build_eqnet(spec: EqNetSpec, seed: int = 0, dtype=np.float64) -> Model:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE9]))
    store = ParamStore(rng, dtype)
    C = spec.channels
    _build_time_mlp(store)
    store.weight("in.w", (C, spec.in_channels, 1), spec.in_channels)
    store.bias("in.b", (C,), spec.in_channels)
    for b, k in enumerate(spec.kernel_schedule()):
        store.weight(f"block{b:02d}.conv1.w", (C, C, k), C * k)
        store.bias(f"block{b:02d}.conv1.b", (C,), C * k)
        store.weight(f"block{b:02d}.conv2.w", (C, C, k), C * k)
        store.bias(f"block{b:02d}.conv2.b", (C,), C * k)
        store.weight(f"block{b:02d}.time.w", (TIME_DIM, C), TIME_DIM)
        store.bias(f"block{b:02d}.time.b", (C,), TIME_DIM)
    store.weight("out.w", (spec.out_channels, C, 1), C)
    store.bias("out.b", (spec.out_channels,), C)
    time_table = sinusoidal_table(512, TIME_DIM, dtype)

    def forward(params, x: Tensor, t) -> Tensor:
        temb = _time_embedding(params, time_table, t)
        h = ad.conv1d(x, params["in.w"], params["in.b"])
        L = x.data.shape[-1]
        for b in range(spec.depth):
            p = f"block{b:02d}"
            tb = ad.reshape(ad.dense(temb, params[f"{p}.time.w"], params[f"{p}.time.b"]), (-1, C, 1))
            h1 = ad.mish(ad.add(ad.conv1d(h, params[f"{p}.conv1.w"], params[f"{p}.conv1.b"]), tb))
            h2 = ad.conv1d(h1, params[f"{p}.conv2.w"], params[f"{p}.conv2.b"])
            h = ad.add(h, h2)
            if b == 0 and spec.posenc:
                pe = sinusoidal_table(L, C, x.data.dtype).T  # [C, L]
                h = ad.add(h, Tensor(pe))
        return ad.conv1d(h, params["out.w"], params["out.b"])

    return Model(spec, store.params, forward, time_table)


def _gn_groups(c: int) -> int:
    return 8 if c % 8 == 0 else 1


def _resblock_params(store: ParamStore, name: str, cin: int, cout: int, k: int):
    store.weight(f"{name}.conv1.w", (cout, cin, k), cin * k)
    store.bias(f"{name}.conv1.b", (cout,), cin * k)
    store.const(f"{name}.gn1.g", (cout,), 1.0)
    store.const(f"{name}.gn1.b", (cout,), 0.0)
    store.weight(f"{name}.conv2.w", (cout, cout, k), cout * k)
    store.bias(f"{name}.conv2.b", (cout,), cout * k)
    store.const(f"{name}.gn2.g", (cout,), 1.0)
    store.const(f"{name}.gn2.b", (cout,), 0.0)
    store.weight(f"{name}.time.w", (TIME_DIM, cout), TIME_DIM)
    store.bias(f"{name}.time.b", (cout,), TIME_DIM)
    if cin != cout:
        store.weight(f"{name}.skip.w", (cout, cin, 1), cin)
        store.bias(f"{name}.skip.b", (cout,), cin)


def _resblock(params, name, h, temb, cout):
    """Conv -> GroupNorm -> (+time bias) -> Mish, twice, plus residual.

    Zero padding and group statistics follow the reference temporal U-Net
    this baseline mirrors; both leak absolute position, which is the point
    of the baseline.
    """
    g = _gn_groups(cout)
    tb = ad.reshape(ad.dense(temb, params[f"{name}.time.w"], params[f"{name}.time.b"]), (-1, cout, 1))
    y = ad.conv1d(h, params[f"{name}.conv1.w"], params[f"{name}.conv1.b"], padding="zero")
    y = ad.groupnorm(y, params[f"{name}.gn1.g"], params[f"{name}.gn1.b"], g)
    y = ad.mish(ad.add(y, tb))
    y = ad.conv1d(y, params[f"{name}.conv2.w"], params[f"{name}.conv2.b"], padding="zero")
    y = ad.mish(ad.groupnorm(y, params[f"{name}.gn2.g"], params[f"{name}.gn2.b"], g))
    if f"{name}.skip.w" in params:
        h = ad.conv1d(h, params[f"{name}.skip.w"], params[f"{name}.skip.b"])
    return ad.add(h, y)


def build_unet(spec: UNetSpec, seed: int = 0, dtype=np.float64) -> Model:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD4]))
    store = ParamStore(rng, dtype)
    k = spec.kernel
    dims = [spec.base_channels * m for m in spec.mults]
    _build_time_mlp(store)
    store.weight("in.w", (dims[0], spec.in_channels, k), spec.in_channels * k)
    store.bias("in.b", (dims[0],), spec.in_channels * k)
    for lvl in range(3):
        cin = dims[lvl]
        for r in range(spec.res_blocks):
            _resblock_params(store, f"down{lvl}.res{r}", cin, dims[lvl], k)
            cin = dims[lvl]
        store.weight(f"down{lvl}.down.w", (dims[lvl + 1], dims[lvl], k), dims[lvl] * k)
        store.bias(f"down{lvl}.down.b", (dims[lvl + 1],), dims[lvl] * k)
    for r in range(spec.mid_blocks):
        _resblock_params(store, f"mid.res{r}", dims[3], dims[3], k)
    for lvl in reversed(range(3)):
        store.weight(f"up{lvl}.up.w", (dims[lvl], dims[lvl + 1], k), dims[lvl + 1] * k)
        store.bias(f"up{lvl}.up.b", (dims[lvl],), dims[lvl + 1] * k)
        cin = 2 * dims[lvl]  # skip concat
        for r in range(spec.res_blocks):
            _resblock_params(store, f"up{lvl}.res{r}", cin, dims[lvl], k)
            cin = dims[lvl]
    store.weight("out.w", (spec.out_channels, dims[0], 1), dims[0])
    store.bias("out.b", (spec.out_channels,), dims[0])
    time_table = sinusoidal_table(512, TIME_DIM, dtype)

    def forward(params, x: Tensor, t) -> Tensor:
        L = x.data.shape[-1]
        if L % 8 != 0:
            raise ValueError(f"U-Net input length must be divisible by 8, got {L}")
        temb = _time_embedding(params, time_table, t)
        h = ad.conv1d(x, params["in.w"], params["in.b"], padding="zero")
        skips = []
        for lvl in range(3):
            for r in range(spec.res_blocks):
                h = _resblock(params, f"down{lvl}.res{r}", h, temb, dims[lvl])
            skips.append(h)
            h = ad.conv1d(
                h, params[f"down{lvl}.down.w"], params[f"down{lvl}.down.b"], stride=2, padding="zero"
            )
        for r in range(spec.mid_blocks):
            h = _resblock(params, f"mid.res{r}", h, temb, dims[3])
        for lvl in reversed(range(3)):
            h = ad.conv1d(
                ad.upsample2x(h), params[f"up{lvl}.up.w"], params[f"up{lvl}.up.b"], padding="zero"
            )
            h = ad.concat_channels(h, skips[lvl])
            for r in range(spec.res_blocks):
                h = _resblock(params, f"up{lvl}.res{r}", h, temb, dims[lvl])
        return ad.conv1d(h, params["out.w"], params["out.b"])

    return Model(spec, store.params, forward, time_table)


def build(spec, seed: int = 0, dtype=np.float64) -> Model:
    """Construct an initialized model (EMA shadow = parameters) from a spec."""
    if isinstance(spec, EqNetSpec):
        return build_eqnet(spec, seed, dtype)
    if isinstance(spec, UNetSpec):
        return build_unet(spec, seed, dtype)
    raise ValueError(f"unknown spec type {type(spec).__name__}")


def add_posenc(model: Model) -> Model:
    """Variant of an Eq-Net with the fixed position embedding enabled.

    Shares nothing with the input model: parameters are re-initialized from
    the same seed family so the ablation differs only in the embedding.
    """
    if not isinstance(model.spec, EqNetSpec):
        raise ValueError("positional encoding is an Eq-Net ablation; refusing a U-Net")
    spec = EqNetSpec(**{**asdict(model.spec), "posenc": True})
    out = build_eqnet(spec, seed=0, dtype=model.dtype)
    for k, p in model.params.items():
        out.params[k].data[...] = p.data
        out.ema[k][...] = model.ema[k]
    return out


def denoise(model: Model, x_t, t) -> np.ndarray:
    """Predicted clean trajectory, clamped to [-1.1, 1.1].

    x_t: [B, 2, L] or [2, L] normalized; t: diffusion step scalar or [B].
    Pure inference; no graph is built.
    """
    x = np.asarray(x_t, dtype=model.dtype)
    single = x.ndim == 2
    if single:
        x = x[None]
    if not np.all(np.isfinite(x)):
        raise ValueError("denoise input contains non-finite values")
    tt = np.atleast_1d(np.asarray(t, dtype=int))
    if np.any((tt < 0) | (tt >= len(model.time_table))):
        raise ValueError(f"diffusion step {t} out of range")
    if tt.size == 1:
        tt = np.full(x.shape[0], int(tt[0]))
    with ad.no_grad():
        out = ad.clamp(model.forward(Tensor(x), tt), -CLAMP, CLAMP)
    return out.data[0] if single else out.data


def denoise_tensor(model: Model, x: Tensor, t) -> Tensor:
    """Differentiable denoise (training / gradient probes)."""
    tt = np.atleast_1d(np.asarray(t, dtype=int))
    if tt.size == 1:
        tt = np.full(x.data.shape[0], int(tt[0]))
    return ad.clamp(model.forward(x, tt), -CLAMP, CLAMP)


# ---------------------------------------------------------------------------
# Inverse dynamics


class InvDynModel:
    """MLP mapping (current state, target plan state) -> action."""

    def __init__(self, spec: InvDynSpec, params: dict, norm):
        self.spec = spec
        self.params = params
        self.norm = norm

    def act(self, s_current, s_target) -> np.ndarray:
        a = self.act_batch(np.asarray(s_current)[None], np.asarray(s_target)[None])
        return a[0]

    def act_batch(self, s_current: np.ndarray, s_target: np.ndarray) -> np.ndarray:
        x = np.concatenate(
            [self.norm.encode(s_current), self.norm.encode(s_target)], axis=1
        ).astype(next(iter(self.params.values())).dtype)
        with ad.no_grad():
            h = Tensor(x)
            for i in range(self.spec.layers):
                h = ad.mish(ad.dense(h, self.params[f"l{i}.w"], self.params[f"l{i}.b"]))
            out = ad.dense(h, self.params["out.w"], self.params["out.b"])
        return out.data


def invdyn_train(
    dataset,
    spec: InvDynSpec | None = None,
    seed: int = 0,
    steps: int = 2000,
    batch: int = 256,
    lr: float = 1e-3,
    dtype=np.float64,
) -> InvDynModel:
    """Fit the inverse dynamics MLP by MSE on (s_t, s_{t+1}) -> a_t pairs.

    Pairs are harvested across the full horizon, so terminal-repeat padding
    (zero action at the terminal state) is part of the training signal.
    """
    from .optim import OptimState, adamw_step

    if len(dataset.trajectories) == 0:
        raise ValueError("invdyn_train needs a nonempty dataset")
    spec = spec or InvDynSpec()
    H = dataset.horizon
    states = dataset.states_array()
    actions = np.stack([t.actions for t in dataset.trajectories])
    cur = states[:, : H - 1].reshape(-1, 2)
    tgt = states[:, 1:H].reshape(-1, 2)
    act = actions[:, : H - 1].reshape(-1, 2)
    inputs = np.concatenate([dataset.norm.encode(cur), dataset.norm.encode(tgt)], axis=1).astype(dtype)
    targets = act.astype(dtype)

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1D]))
    store = ParamStore(rng, dtype)
    fin = 4
    for i in range(spec.layers):
        store.weight(f"l{i}.w", (fin, spec.hidden), fin)
        store.bias(f"l{i}.b", (spec.hidden,), fin)
        fin = spec.hidden
    store.weight("out.w", (fin, 2), fin)
    store.bias("out.b", (2,), fin)
    params = store.params
    opt = OptimState(base_lr=lr, weight_decay=0.0)
    n = len(inputs)
    for s in range(steps):
        idx = rng.integers(n, size=batch)
        x = Tensor(inputs[idx])
        h = x
        for i in range(spec.layers):
            h = ad.mish(ad.dense(h, params[f"l{i}.w"], params[f"l{i}.b"]))
        pred = ad.dense(h, params["out.w"], params["out.b"])
        diff = pred - Tensor(targets[idx])
        loss = ad.mean(ad.mul(diff, diff))
        for p in params.values():
            p.zero_grad()
        loss.backward()
        adamw_step(params, opt, lr)
    return InvDynModel(spec, params, dataset.norm)
