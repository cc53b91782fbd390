"""Real 2-D FFT helpers and the mode-truncated spectral convolution.

Conventions: forward transform unnormalized, inverse scaled by 1/(H*W)
(the numpy default). Gradients of real losses with respect to complex
quantities are stored as packed (d/dRe + i * d/dIm) complex arrays, which
is the convention under which complex parameters can be updated like two
independent real parameters.

Mode retention follows the usual corner scheme on the half spectrum: the
lowest ``m`` columns, and the lowest ``m`` nonnegative plus ``m - 1``
negative frequency rows. Weight slots are allocated for the full
(2m-1, m) corner so parameter shapes are resolution independent; at apply
time rows that alias on a small grid are deduplicated and columns beyond
the grid's half spectrum are skipped.
"""
from __future__ import annotations

import numpy as np
import scipy.fft as _fft


def rfft2(x: np.ndarray) -> np.ndarray:
    """Unnormalized forward real FFT over the last two axes."""
    return _fft.rfft2(x, axes=(-2, -1))


def irfft2(X: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Inverse scaled by 1/(H*W); exact inverse of rfft2."""
    return _fft.irfft2(X, s=shape, axes=(-2, -1))


def _hermitian_project_column(col: np.ndarray) -> np.ndarray:
    """Project a height-axis column onto its conjugate-symmetric part.

    The inverse real transform only sees the symmetric part of the first
    (and, for even widths, the Nyquist) column, so the adjoint must project.
    """
    flipped = np.conj(np.roll(col[..., ::-1], 1, axis=-1))
    return 0.5 * (col + flipped)


def irfft2_adjoint(g: np.ndarray, width: int) -> np.ndarray:
    """Packed complex gradient wrt Y of L(irfft2(Y)) given dL/dy = g."""
    H, W = g.shape[-2], width
    F = _fft.rfft2(g, axes=(-2, -1)) / (H * W)
    G = 2.0 * F
    G[..., :, 0] = _hermitian_project_column(F[..., :, 0])
    if W % 2 == 0:
        G[..., :, -1] = _hermitian_project_column(F[..., :, -1])
    return G


def rfft2_adjoint(G: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Real gradient wrt x of L(rfft2(x)) given packed complex dL/dX = G."""
    H, W = shape
    full = np.zeros(G.shape[:-1] + (W,), dtype=G.dtype)
    full[..., : G.shape[-1]] = G
    return H * W * np.real(_fft.ifft2(full, axes=(-2, -1)))


def mode_slots(num_modes: int, H: int, W: int):
    """(slot, row) pairs and retained column count for a given grid.

    Slots index the first axis of the weight tensor; rows index the FFT
    height axis. Aliased rows on small grids keep only their first slot.
    """
    m = num_modes
    W2 = W // 2 + 1
    cols = min(m, W2)
    pairs = []
    seen: set[int] = set()
    for s in range(m):
        r = s
        if r < H and r not in seen:
            pairs.append((s, r))
            seen.add(r)
    for k in range(1, m):
        r = H - k
        if 0 <= r < H and r not in seen:
            pairs.append((m - 1 + k, r))
            seen.add(r)
    slots = np.array([p[0] for p in pairs], dtype=np.intp)
    rows = np.array([p[1] for p in pairs], dtype=np.intp)
    return slots, rows, cols


def spectral_weight_shape(num_modes: int, channels: int) -> tuple[int, ...]:
    return (2 * num_modes - 1, num_modes, channels, channels)


def spectral_conv(x: np.ndarray, R: np.ndarray, num_modes: int):
    """Mode-truncated channel-mixing convolution.

    x: (B, C, H, W) real; R: (2m-1, m, C, C) complex, Y_i = sum_j R_ij X_j
    at each retained mode. Returns (y, cache) with cache kept for backward.
    """
    Y, Xsel, slots, rows, cols = _assemble_spectrum(x, R, num_modes)
    H, W = x.shape[-2:]
    y = irfft2(Y, (H, W))
    cache = (Xsel, R, slots, rows, cols, (H, W))
    return y, cache


def spectral_conv_spectrum(x: np.ndarray, R: np.ndarray, num_modes: int
                           ) -> np.ndarray:
    """The output spectrum spectral_conv inverts: structurally zero at
    every discarded mode."""
    return _assemble_spectrum(x, R, num_modes)[0]


def _assemble_spectrum(x, R, num_modes):
    B, C, H, W = x.shape
    slots, rows, cols = mode_slots(num_modes, H, W)
    X = rfft2(x)
    Xsel = X[:, :, rows, :cols]                       # (B, C, r, c)
    Rsel = R[slots, :cols]                            # (r, c, C, C)
    # Y_birc = sum_j R_rcij X_bjrc, done as a (r, c)-batched GEMM.
    Xm = np.ascontiguousarray(Xsel.transpose(2, 3, 0, 1))
    Ysel = (Xm @ Rsel.transpose(0, 1, 3, 2)).transpose(2, 3, 0, 1)
    Y = np.zeros_like(X)
    Y[:, :, rows, :cols] = Ysel
    return Y, Xsel, slots, rows, cols


def spectral_conv_backward(g: np.ndarray, cache):
    """Gradients (dx, dR) of the spectral convolution."""
    Xsel, R, slots, rows, cols, (H, W) = cache
    GY = irfft2_adjoint(g, W)
    Gsel = GY[:, :, rows, :cols]                      # (B, C, r, c)
    Rsel = R[slots, :cols]
    Gm = np.ascontiguousarray(Gsel.transpose(2, 3, 0, 1))   # (r, c, B, C)
    Xm = np.ascontiguousarray(Xsel.transpose(2, 3, 0, 1))
    # dR_rcij = sum_b G_birc conj(X)_bjrc
    dRsel = Gm.transpose(0, 1, 3, 2) @ np.conj(Xm)
    dR = np.zeros_like(R)
    dR[slots, :cols] = dRsel
    # GX_bjrc = sum_i conj(R)_rcij G_birc
    GXsel = (Gm @ np.conj(Rsel)).transpose(2, 3, 0, 1)
    GX = np.zeros(g.shape[:-2] + (H, W // 2 + 1), dtype=Gsel.dtype)
    GX[:, :, rows, :cols] = GXsel
    dx = rfft2_adjoint(GX, (H, W))
    return dx, dR
