"""Minimal reverse-mode autodiff on numpy arrays.

Only the operations the denoiser family needs: 1D convolution (stride 1 or 2,
replicate-edge padding), dense layers, the Mish nonlinearity, elementwise
arithmetic, channel concat, nearest upsampling, clamping and reductions.
Convolutions are lowered to BLAS matmuls via im2col, so training runs at
matrix-multiply speed. 64-bit arrays are used for tests/analysis, 32-bit for
fast training; ops inherit the dtype of their inputs.
"""
from __future__ import annotations

import contextlib

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_grad_enabled = True
# When set, every op output is scanned for NaN/inf. Enabled by tests; the
# training loop checks loss/grads at step boundaries instead.
check_finite = False


@contextlib.contextmanager
def no_grad():
    """Disable graph construction (inference / sampling loops)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """An ndarray plus a gradient slot and a backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad and _grad_enabled
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.grad is not None})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self, seed=None):
        """Reverse pass from this tensor. `seed` defaults to ones."""
        if seed is None:
            seed = np.ones_like(self.data)
        topo, visited = [], set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.asarray(seed, dtype=self.data.dtype)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Convenience arithmetic (full broadcast semantics live in add/mul).
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __neg__(self):
        return mul(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _finite_check(arr):
    if check_finite and not np.all(np.isfinite(arr)):
        raise FloatingPointError("non-finite values produced by an autodiff op")


def _make(data, parents, backward):
    _finite_check(data)
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    """Reduce gradient `g` back to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), backward)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.data.shape
    data = x.data.reshape(shape)

    def backward(g):
        x._accumulate(g.reshape(old))

    return _make(data, (x,), backward)


def mean(x) -> Tensor:
    x = as_tensor(x)
    n = x.data.size
    data = np.asarray(x.data.mean())

    def backward(g):
        x._accumulate(np.full_like(x.data, g / n))

    return _make(data, (x,), backward)


def tsum(x) -> Tensor:
    x = as_tensor(x)
    data = np.asarray(x.data.sum())

    def backward(g):
        x._accumulate(np.full_like(x.data, g))

    return _make(data, (x,), backward)


def mish(x) -> Tensor:
    """x * tanh(softplus(x)); smooth, fixes 0 -> 0.

    One exp evaluation serves softplus, its tanh argument and the sigmoid in
    the backward pass (overflow-safe via exp(-|x|)).
    """
    x = as_tensor(x)
    v = x.data
    e = np.exp(-np.abs(v))
    sp = np.log1p(e) + np.maximum(v, 0.0)  # softplus
    tsp = np.tanh(sp)
    data = v * tsp

    def backward(g):
        sig = np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        x._accumulate(g * (tsp + v * (1.0 - tsp * tsp) * sig))

    return _make(data, (x,), backward)


def clamp(x, lo: float, hi: float) -> Tensor:
    """Clamp with pass-through gradient strictly inside (lo, hi)."""
    x = as_tensor(x)
    data = np.clip(x.data, lo, hi)

    def backward(g):
        x._accumulate(g * ((x.data > lo) & (x.data < hi)))

    return _make(data, (x,), backward)


def dense(x, w, b=None) -> Tensor:
    """Affine map: x [..., F] @ w [F, G] (+ b [G])."""
    x, w = as_tensor(x), as_tensor(w)
    if x.data.shape[-1] != w.data.shape[0]:
        raise ValueError(f"dense shape mismatch: x {x.data.shape} vs w {w.data.shape}")
    data = x.data @ w.data
    if b is not None:
        b = as_tensor(b)
        if b.data.shape != (w.data.shape[1],):
            raise ValueError(f"dense bias shape {b.data.shape} != ({w.data.shape[1]},)")
        data = data + b.data
    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g @ w.data.T)
        if w.requires_grad:
            xf = x.data.reshape(-1, x.data.shape[-1])
            gf = g.reshape(-1, g.shape[-1])
            w._accumulate(xf.T @ gf)
        if b is not None and b.requires_grad:
            b._accumulate(g.reshape(-1, g.shape[-1]).sum(axis=0))

    return _make(data, parents, backward)


def _pad_edges(x, p, mode):
    if p == 0:
        return x
    if mode == "replicate":
        left = np.repeat(x[:, :, :1], p, axis=2)
        right = np.repeat(x[:, :, -1:], p, axis=2)
    elif mode == "zero":
        left = np.zeros_like(x[:, :, :p])
        right = left
    else:
        raise ValueError(f"unknown padding mode '{mode}'")
    return np.concatenate([left, x, right], axis=2)


def conv1d(x, w, b=None, stride: int = 1, padding: str = "replicate") -> Tensor:
    """1D convolution with edge padding and same-grid output.

    x: [B, C_in, L]; w: [C_out, C_in, k] with k odd; output [B, C_out, L]
    for stride 1 and [B, C_out, L//stride] for stride 2 (L even). Padding is
    (k-1)/2 values per side, replicated edge values by default, so the output
    length never depends on k.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 3:
        raise ValueError(f"conv1d expects [B, C, L] input, got {x.data.shape}")
    B, Ci, L = x.data.shape
    Co, Ci_w, k = w.data.shape
    if k % 2 == 0:
        raise ValueError(f"conv1d kernel size must be odd, got {k}")
    if Ci_w != Ci:
        raise ValueError(f"conv1d channel mismatch: input {Ci}, kernel {Ci_w}")
    if stride not in (1, 2):
        raise ValueError(f"conv1d stride must be 1 or 2, got {stride}")
    p = (k - 1) // 2
    xp = _pad_edges(x.data, p, padding)
    Lo = L if stride == 1 else L // 2
    win = sliding_window_view(xp, k, axis=2)  # [B, Ci, L+2p-k+1, k]
    if stride == 2:
        win = win[:, :, ::2, :]
        win = win[:, :, :Lo, :]
    cols = np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(B * Lo, Ci * k)
    w2 = w.data.reshape(Co, Ci * k)
    out = cols @ w2.T
    if b is not None:
        b = as_tensor(b)
        if b.data.shape != (Co,):
            raise ValueError(f"conv1d bias shape {b.data.shape} != ({Co},)")
        out += b.data
    data = out.reshape(B, Lo, Co).transpose(0, 2, 1)
    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        gf = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(B * Lo, Co)
        if w.requires_grad:
            w._accumulate((gf.T @ cols).reshape(Co, Ci, k))
        if b is not None and b.requires_grad:
            b._accumulate(gf.sum(axis=0))
        if x.requires_grad:
            # Scatter in [B, L, Ci] layout (contiguous destinations), then
            # transpose once.
            gcols = (gf @ w2).reshape(B, Lo, Ci, k)
            gxp = np.zeros((B, xp.shape[2], Ci), dtype=xp.dtype)
            for j in range(k):
                gxp[:, j : j + stride * Lo : stride, :] += gcols[:, :, :, j]
            gx = np.ascontiguousarray(gxp[:, p : p + L, :].transpose(0, 2, 1))
            if p and padding == "replicate":
                # Replicated pad cells are views of the edge elements.
                gx[:, :, 0] += gxp[:, :p, :].sum(axis=1)
                gx[:, :, -1] += gxp[:, p + L :, :].sum(axis=1)
            x._accumulate(gx)

    return _make(data, parents, backward)


def groupnorm(x, gamma, beta, groups: int, eps: float = 1e-5) -> Tensor:
    """Group normalization over (channels-per-group, length) per sample.

    x: [B, C, L]; gamma/beta: [C]. Statistics couple every position in the
    sequence, which is exactly why the U-Net baseline is position-sensitive.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    B, C, L = x.data.shape
    if C % groups != 0:
        raise ValueError(f"channels {C} not divisible by groups {groups}")
    xg = x.data.reshape(B, groups, -1)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mu) * inv).reshape(B, C, L)
    data = xhat * gamma.data[:, None] + beta.data[:, None]

    def backward(g):
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=(0, 2)))
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=(0, 2)))
        if x.requires_grad:
            gh = (g * gamma.data[:, None]).reshape(B, groups, -1)
            xh = xhat.reshape(B, groups, -1)
            m1 = gh.mean(axis=2, keepdims=True)
            m2 = (gh * xh).mean(axis=2, keepdims=True)
            gx = (gh - m1 - xh * m2) * inv
            x._accumulate(gx.reshape(B, C, L))

    return _make(data, (x, gamma, beta), backward)


def upsample2x(x) -> Tensor:
    """Nearest-neighbour 2x upsampling along the sequence axis."""
    x = as_tensor(x)
    data = np.repeat(x.data, 2, axis=2)

    def backward(g):
        x._accumulate(g[:, :, 0::2] + g[:, :, 1::2])

    return _make(data, (x,), backward)


def concat_channels(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    na = a.data.shape[1]
    data = np.concatenate([a.data, b.data], axis=1)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g[:, :na])
        if b.requires_grad:
            b._accumulate(g[:, na:])

    return _make(data, (a, b), backward)


def finite_difference_grad(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar-valued fn at x (the oracle side
    of every gradient check; independent of the reverse-mode code paths)."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn()
        flat[i] = orig - h
        fm = fn()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def gradcheck(build, inputs, h: float = 1e-5, tol: float = 1e-6) -> float:
    """Compare reverse-mode gradients against central finite differences.

    `build(*inputs)` returns an output Tensor; the comparison scalar is
    sum(out * v) for a fixed random cotangent v. Returns the worst relative
    error across all differentiable inputs; raises AssertionError above tol.
    Inputs must be float64 Tensors with requires_grad=True.
    """
    out = build(*inputs)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(out.data.shape)
    scalar = tsum(mul(out, Tensor(v)))
    for t in inputs:
        t.zero_grad()
    scalar.backward()
    worst = 0.0
    for t in inputs:
        if not t.requires_grad:
            continue

        def fn(t=t):
            with no_grad():
                o = build(*inputs)
            return float((o.data * v).sum())

        num = finite_difference_grad(fn, t.data, h=h)
        ana = t.grad if t.grad is not None else np.zeros_like(t.data)
        scale = max(np.abs(num).max(), np.abs(ana).max(), 1e-8)
        rel = np.abs(num - ana).max() / scale
        worst = max(worst, rel)
    if worst > tol:
        raise AssertionError(f"gradient check failed: rel error {worst:.3e} > {tol:.1e}")
    return worst
