import numpy as np
import pytest

from gyrebo.fno.fourier import (
    irfft2, irfft2_adjoint, mode_slots, rfft2, rfft2_adjoint, spectral_conv,
    spectral_conv_backward, spectral_weight_shape,
)


def identity_weights(m, C):
    R = np.zeros(spectral_weight_shape(m, C), dtype=np.complex128)
    R[:, :, range(C), range(C)] = 1.0
    return R


def test_rfft2_dc_component():
    x = np.full((8, 8), 3.0)
    X = rfft2(x)
    assert X[0, 0] == pytest.approx(64 * 3.0)
    X[0, 0] = 0
    assert np.max(np.abs(X)) < 1e-10


def test_roundtrip():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(16, 16))
    assert np.max(np.abs(irfft2(rfft2(x), (16, 16)) - x)) < 1e-12


def test_parseval():
    # sum x^2 == (1/HW) sum |X|^2 over the full spectrum; interior columns of
    # the half spectrum count twice.
    rng = np.random.default_rng(1)
    for H, W in [(8, 8), (6, 10), (7, 9)]:
        x = rng.normal(size=(H, W))
        X = rfft2(x)
        weights = np.full(X.shape[-1], 2.0)
        weights[0] = 1.0
        if W % 2 == 0:
            weights[-1] = 1.0
        spec = np.sum(weights * np.abs(X) ** 2) / (H * W)
        assert spec == pytest.approx(np.sum(x**2), rel=1e-10)


def test_mode_slots_dedup_on_small_grid():
    # m=5 on an 8-row grid: positive rows 0..4 and negative rows 4..7 alias
    # at row 4, so only 8 distinct rows survive.
    slots, rows, cols = mode_slots(5, 8, 8)
    assert len(rows) == len(set(rows.tolist())) == 8
    assert cols == 5


def test_spectral_identity_full_modes():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(2, 3, 8, 8))
    m = 8 // 2 + 1
    y, _ = spectral_conv(x, identity_weights(m, 3), m)
    assert np.max(np.abs(y - x)) < 1e-10


def test_spectral_zero_weights():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(1, 2, 8, 8))
    R = np.zeros(spectral_weight_shape(3, 2), dtype=np.complex128)
    y, _ = spectral_conv(x, R, 3)
    assert np.all(y == 0.0)


def test_spectral_truncation_zero_energy_outside_retention():
    rng = np.random.default_rng(4)
    m = 2
    x = rng.normal(size=(1, 1, 8, 8))
    R = (rng.normal(size=spectral_weight_shape(m, 1))
         + 1j * rng.normal(size=spectral_weight_shape(m, 1)))
    y, _ = spectral_conv(x, R, m)
    Y = rfft2(y[0, 0])
    slots, rows, cols = mode_slots(m, 8, 8)
    mask = np.zeros(Y.shape, dtype=bool)
    mask[np.ix_(rows, range(cols))] = True
    assert np.max(np.abs(Y[~mask])) < 1e-10


def test_spectral_matches_full_dft_oracle():
    # Brute-force oracle: build the full DFT matrix, multiply the truncated
    # spectrum elementwise, invert densely.
    rng = np.random.default_rng(5)
    H = W = 8
    m = 2
    x = rng.normal(size=(1, 1, H, W))
    R = (rng.normal(size=spectral_weight_shape(m, 1))
         + 1j * rng.normal(size=spectral_weight_shape(m, 1)))
    y, _ = spectral_conv(x, R, m)

    F = np.fft.fft2(x[0, 0])  # full spectrum
    slots, rows, cols = mode_slots(m, H, W)
    scalar = np.zeros((H, W), dtype=np.complex128)  # per-mode multiplier
    for s, r in zip(slots, rows):
        for c in range(cols):
            scalar[r, c] = R[s, c, 0, 0]
            if c > 0:  # hermitian mirror of a retained half-spectrum mode
                scalar[(H - r) % H, (W - c) % W] = np.conj(R[s, c, 0, 0])
    # mirror of column-0 modes: rows (H-r) already covered by slots; column 0
    # mirrors onto itself, handled by the loop above.
    expect = np.fft.ifft2(F * scalar)
    # Column-0 retained modes are not hermitian-paired in the half spectrum,
    # so the real-transform result keeps only the symmetric part there.
    assert np.max(np.abs(y[0, 0] - expect.real)) < 1e-10


def test_adjoint_identities():
    rng = np.random.default_rng(6)
    H, W = 6, 8
    g = rng.normal(size=(H, W))
    Y = rng.normal(size=(H, W // 2 + 1)) + 1j * rng.normal(size=(H, W // 2 + 1))
    # <g, irfft2(Y)> must equal <irfft2_adjoint(g), Y> under the packed
    # real inner product.
    lhs = np.sum(g * irfft2(Y, (H, W)))
    G = irfft2_adjoint(g, W)
    rhs = np.sum(G.real * Y.real + G.imag * Y.imag)
    assert lhs == pytest.approx(rhs, rel=1e-12)

    x = rng.normal(size=(H, W))
    Gx = rng.normal(size=(H, W // 2 + 1)) + 1j * rng.normal(size=(H, W // 2 + 1))
    lhs = np.sum(Gx.real * rfft2(x).real + Gx.imag * rfft2(x).imag)
    rhs = np.sum(rfft2_adjoint(Gx, (H, W)) * x)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_spectral_conv_gradients_finite_difference():
    rng = np.random.default_rng(7)
    H = W = 8
    m, C, B = 2, 2, 2
    x = rng.normal(size=(B, C, H, W))
    R = (rng.normal(size=spectral_weight_shape(m, C))
         + 1j * rng.normal(size=spectral_weight_shape(m, C)))
    gy = rng.normal(size=(B, C, H, W))
    y, cache = spectral_conv(x, R, m)
    dx, dR = spectral_conv_backward(gy, cache)

    def loss(xv, Rv):
        yv, _ = spectral_conv(xv, Rv, m)
        return np.sum(gy * yv)

    h = 1e-6
    idxs = [tuple(rng.integers(d) for d in x.shape) for _ in range(20)]
    for idx in idxs:
        xp = x.copy(); xp[idx] += h
        xm = x.copy(); xm[idx] -= h
        fd = (loss(xp, R) - loss(xm, R)) / (2 * h)
        assert dx[idx] == pytest.approx(fd, rel=1e-5, abs=1e-8)
    for idx in [tuple(rng.integers(d) for d in R.shape) for _ in range(20)]:
        for part, get in ((1.0, np.real), (1j, np.imag)):
            Rp = R.copy(); Rp[idx] += h * part
            Rm = R.copy(); Rm[idx] -= h * part
            fd = (loss(x, Rp) - loss(x, Rm)) / (2 * h)
            assert get(dR[idx]) == pytest.approx(fd, rel=1e-5, abs=1e-8)
