"""Fourier-operator network: lifting, spectral blocks, projection.

Parameters live in a plain dict of float64 arrays (``ParamSet``). Complex
spectral weights are stored with a trailing real/imag axis of size 2 so
the same optimizer, serialization, and finite-difference code paths treat
every parameter as real. ``forward`` returns a cache consumed by
``backward``, which produces exact reverse-mode gradients for every entry.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .activations import activation, activation_grad, needs_slope
from .fourier import (irfft2, rfft2, spectral_conv, spectral_conv_backward,
                      spectral_weight_shape)

ParamSet = dict[str, np.ndarray]

BLOCK_ACT = "gelu"  # block nonlinearity is fixed; only lift/proj are searched
DEFAULT_PAD_WIDTH = 8


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class FnoConfig:
    in_channels: int = 5
    out_channels: int = 4
    padding: bool = False
    padding_type: str = "constant"
    pad_width: int = DEFAULT_PAD_WIDTH
    coord_feat: bool = False
    lift_act: str = "gelu"
    proj_act: str = "silu"
    num_FNO: int = 4
    num_latent_feat: int = 32
    num_modes: int = 16
    num_proj_layers: int = 2
    proj_size: int = 16

    @classmethod
    def from_hyperparams(cls, hp: dict, grid: int, in_channels: int = 5,
                         out_channels: int = 4,
                         pad_width: int = DEFAULT_PAD_WIDTH) -> "FnoConfig":
        """Build from a sampled configuration, clamping grid-bound fields."""
        cfg = cls(
            in_channels=in_channels, out_channels=out_channels,
            padding=bool(hp["padding"]), padding_type=hp["padding_type"],
            pad_width=pad_width, coord_feat=bool(hp["coord_feat"]),
            lift_act=hp["lift_act"], proj_act=hp["proj_act"],
            num_FNO=int(hp["num_FNO"]), num_latent_feat=int(hp["num_latent_feat"]),
            num_modes=int(hp["num_modes"]),
            num_proj_layers=int(hp["num_proj_layers"]), proj_size=int(hp["proj_size"]),
        )
        return cfg.clamped(grid)

    def clamped(self, grid: int) -> "FnoConfig":
        """Clamp num_modes and pad_width to what the (padded) grid supports."""
        pw = min(self.pad_width, grid - 1) if self.padding else self.pad_width
        g = grid + 2 * pw if self.padding else grid
        max_modes = g // 2 + 1
        return replace(self, num_modes=min(self.num_modes, max_modes), pad_width=pw)


def _affine_init(rng, fan_out, fan_in):
    # Kaiming-uniform with gain sqrt(2): keeps activations from vanishing
    # through deep block stacks, so large num_FNO settings stay trainable.
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


def _proj_widths(config: FnoConfig) -> list[tuple[int, int]]:
    widths = []
    prev = config.num_latent_feat
    for _ in range(config.num_proj_layers):
        widths.append((config.proj_size, prev))
        prev = config.proj_size
    return widths


def init_params(config: FnoConfig, seed: int) -> ParamSet:
    rng = np.random.default_rng(seed)
    C = config.num_latent_feat
    in_ch = config.in_channels + (2 if config.coord_feat else 0)
    params: ParamSet = {}
    params["lift.w"] = _affine_init(rng, C, in_ch)
    params["lift.b"] = np.zeros(C)
    if needs_slope(config.lift_act):
        params["lift.slope"] = np.array(0.25)
    spec_std = 1.0 / C**2
    for b in range(config.num_FNO):
        shape = spectral_weight_shape(config.num_modes, C)
        params[f"block{b}.R"] = rng.normal(0.0, spec_std, size=shape + (2,))
        params[f"block{b}.w"] = _affine_init(rng, C, C)
        params[f"block{b}.b"] = np.zeros(C)
    for li, (out, inn) in enumerate(_proj_widths(config)):
        params[f"proj{li}.w"] = _affine_init(rng, out, inn)
        params[f"proj{li}.b"] = np.zeros(out)
        if needs_slope(config.proj_act):
            params[f"proj{li}.slope"] = np.array(0.25)
    params["out.w"] = _affine_init(rng, config.out_channels, config.proj_size)
    params["out.b"] = np.zeros(config.out_channels)
    return params


def param_count(params: ParamSet) -> int:
    return sum(p.size for p in params.values())


def _complex_view(a):
    """Packed (..., 2) real storage viewed as a complex array."""
    cplx = np.complex64 if a.dtype == np.float32 else np.complex128
    return a.view(cplx)[..., 0]


def _pointwise(w, b, x):
    B, C, H, W = x.shape
    y = np.matmul(w, x.reshape(B, C, H * W)).reshape(B, -1, H, W)
    return y + b[None, :, None, None]


def _pointwise_backward(w, x, g):
    B, Ci, H, W = x.shape
    gf = g.reshape(B, -1, H * W)
    xf = x.reshape(B, Ci, H * W)
    dw = np.matmul(gf, xf.transpose(0, 2, 1)).sum(axis=0)
    db = g.sum(axis=(0, 2, 3))
    dx = np.matmul(w.T, gf).reshape(B, Ci, H, W)
    return dw, db, dx


def _coord_channels(B, H, W):
    ys = np.linspace(-1.0, 1.0, H)
    xs = np.linspace(-1.0, 1.0, W)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    coords = np.stack([xx, yy])[None].repeat(B, axis=0)
    return coords


def _pad_indices(n: int, pw: int, mode: str) -> np.ndarray:
    # np.pad applied to an index vector yields the exact source-index map.
    return np.pad(np.arange(n), pw, mode={"reflect": "reflect",
                                          "replicate": "edge",
                                          "circular": "wrap"}[mode])


def _pad(x, pw, mode):
    if pw == 0:
        return x, None
    if mode == "constant":
        return np.pad(x, ((0, 0), (0, 0), (pw, pw), (pw, pw))), None
    H, W = x.shape[-2:]
    ih = _pad_indices(H, pw, mode)
    iw = _pad_indices(W, pw, mode)
    return x[..., ih[:, None], iw[None, :]], (ih, iw)


def _pad_backward(g, pw, mode, shape, idx):
    if pw == 0:
        return g
    H, W = shape
    if mode == "constant":
        return g[..., pw:-pw, pw:-pw]
    ih, iw = idx
    lin = (ih[:, None] * W + iw[None, :]).ravel()
    B, C = g.shape[:2]
    gflat = g.reshape(B * C, -1)
    out = np.zeros((B * C, H * W), dtype=g.dtype)
    np.add.at(out, (np.arange(B * C)[:, None], lin[None, :]), gflat)
    return out.reshape(B, C, H, W)


def forward(config: FnoConfig, params: ParamSet, x: np.ndarray):
    """Predict (B, out_channels, H, W) from (B, in_channels, H, W)."""
    dtype = params["lift.w"].dtype
    x = np.asarray(x, dtype=dtype)
    if x.ndim != 4 or x.shape[1] != config.in_channels:
        raise ShapeError(f"expected (B, {config.in_channels}, H, W), got {x.shape}")
    B, _, H, W = x.shape
    if H != W:
        raise ShapeError("spatial dimensions must be square")
    cache: dict = {"config": config, "params": params, "input_shape": x.shape}

    if config.coord_feat:
        x = np.concatenate([x, _coord_channels(B, H, W).astype(dtype)], axis=1)
    cache["lift_in_channels"] = x.shape[1]

    pw = config.pad_width if config.padding else 0
    x, pad_idx = _pad(x, pw, config.padding_type)
    cache["pad"] = (pw, config.padding_type, (x.shape[-2] - 2 * pw,
                                              x.shape[-1] - 2 * pw), pad_idx)

    cache["lift_x"] = x
    z = _pointwise(params["lift.w"], params["lift.b"], x)
    cache["lift_pre"] = z
    slope = params.get("lift.slope")
    z = activation(config.lift_act, z,
                   None if slope is None else float(slope)).astype(dtype, copy=False)

    block_caches = []
    for b in range(config.num_FNO):
        R = _complex_view(params[f"block{b}.R"])
        s, sc_cache = spectral_conv(z, R, config.num_modes)
        pre = s + _pointwise(params[f"block{b}.w"], params[f"block{b}.b"], z)
        out = activation(BLOCK_ACT, pre).astype(dtype, copy=False)
        block_caches.append((z, sc_cache, pre))
        z = out
    cache["blocks"] = block_caches

    proj_caches = []
    for li in range(config.num_proj_layers):
        pre = _pointwise(params[f"proj{li}.w"], params[f"proj{li}.b"], z)
        slope = params.get(f"proj{li}.slope")
        out = activation(config.proj_act, pre,
                         None if slope is None else float(slope)).astype(dtype, copy=False)
        proj_caches.append((z, pre))
        z = out
    cache["proj"] = proj_caches

    cache["out_x"] = z
    y = _pointwise(params["out.w"], params["out.b"], z)

    if pw > 0:
        y = y[..., pw:-pw, pw:-pw]
    return y, cache


def backward(cache: dict, grad_pred: np.ndarray) -> ParamSet:
    """Gradients for every parameter given dL/dprediction."""
    config: FnoConfig = cache["config"]
    params: ParamSet = cache["params"]
    grads: ParamSet = {}
    dtype = params["lift.w"].dtype
    g = np.asarray(grad_pred, dtype=dtype)

    pw, pad_mode, unpadded, pad_idx = cache["pad"]
    if pw > 0:
        # The crop's adjoint is zero-embedding into the padded grid.
        Hp = unpadded[0] + 2 * pw
        Wp = unpadded[1] + 2 * pw
        gp = np.zeros(g.shape[:2] + (Hp, Wp), dtype=dtype)
        gp[..., pw:-pw, pw:-pw] = g
        g = gp

    dw, db, g = _pointwise_backward(params["out.w"], cache["out_x"], g)
    grads["out.w"] = dw
    grads["out.b"] = db

    for li in reversed(range(config.num_proj_layers)):
        z_in, pre = cache["proj"][li]
        slope = params.get(f"proj{li}.slope")
        g, dslope = activation_grad(config.proj_act, pre, g,
                                    None if slope is None else float(slope))
        g = g.astype(dtype, copy=False)
        if dslope is not None:
            grads[f"proj{li}.slope"] = np.array(dslope)
        dw, db, g = _pointwise_backward(params[f"proj{li}.w"], z_in, g)
        grads[f"proj{li}.w"] = dw
        grads[f"proj{li}.b"] = db

    for b in reversed(range(config.num_FNO)):
        z_in, sc_cache, pre = cache["blocks"][b]
        g, _ = activation_grad(BLOCK_ACT, pre, g)
        g = g.astype(dtype, copy=False)
        dx_spec, dR = spectral_conv_backward(g, sc_cache)
        # contiguous complex memory is already [re, im] interleaved
        grads[f"block{b}.R"] = np.ascontiguousarray(dR).view(dtype).reshape(
            dR.shape + (2,))
        dw, db, dx_aff = _pointwise_backward(params[f"block{b}.w"], z_in, g)
        grads[f"block{b}.w"] = dw
        grads[f"block{b}.b"] = db
        g = dx_spec + dx_aff

    pre = cache["lift_pre"]
    slope = params.get("lift.slope")
    g, dslope = activation_grad(config.lift_act, pre, g,
                                None if slope is None else float(slope))
    g = g.astype(dtype, copy=False)
    if dslope is not None:
        grads["lift.slope"] = np.array(dslope)
    dw, db, g = _pointwise_backward(params["lift.w"], cache["lift_x"], g)
    grads["lift.w"] = dw
    grads["lift.b"] = db
    # Remaining upstream gradient flows into the (non-trainable) inputs.
    return grads
