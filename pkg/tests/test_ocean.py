import numpy as np
import pytest

from gyrebo import ocean
from gyrebo.ocean import (GenConfig, OceanError, CflError, basin_mask,
                          generate_ensemble, simulate_one, make_pairs, split,
                          normalize_fit, normalize_apply,
                          normalize_invert_states, save_ensemble,
                          load_ensemble)


def small_gen(**kw):
    base = dict(n_sims=3, timesteps_out=4, grid=16, seed=7)
    base.update(kw)
    return GenConfig(**base)


def test_mask_is_centered_disk():
    mask = basin_mask(32)
    assert mask[16, 16]
    assert not mask[0, 0]
    assert np.array_equal(mask, mask[::-1, :])
    assert np.array_equal(mask, mask[:, ::-1])


def test_config_validation():
    with pytest.raises(OceanError):
        GenConfig(n_sims=0)
    with pytest.raises(OceanError):
        GenConfig(grid=4)
    with pytest.raises(OceanError):
        GenConfig(kappa_range=(100.0, 100.0))


def test_cfl_error_names_term():
    gen = small_gen(substeps_per_day=1)
    with pytest.raises(CflError, match="CFL"):
        simulate_one(gen, 500.0, np.random.default_rng(0))


def test_shapes_and_mask_zeros():
    gen = small_gen()
    ens = generate_ensemble(gen)
    assert ens.states.shape == (3, 4, 16, 16, 5)
    assert ens.states.dtype == np.float32
    outside = ~ens.mask
    assert np.all(ens.states[:, :, outside, :] == 0)
    # kappa channel is constant inside the basin
    for i in range(ens.n_sims):
        vals = ens.states[i, 0, ens.mask, 4]
        assert np.allclose(vals, ens.kappas[i], rtol=1e-6)


def test_determinism():
    a = generate_ensemble(small_gen())
    b = generate_ensemble(small_gen())
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.kappas, b.kappas)


def test_mass_conserved():
    # conservative flux form: in-basin tracer mass fixed up to roundoff
    gen = small_gen(n_sims=1, timesteps_out=6)
    frames = simulate_one(gen, 1200.0, np.random.default_rng(3))
    mass = frames[:, :, :, 0].sum(axis=(1, 2))
    assert np.all(np.abs(mass - mass[0]) <= 1e-8 * np.abs(mass[0]))


def test_higher_kappa_smooths_more():
    gen = small_gen(n_sims=1, timesteps_out=5)
    lo = simulate_one(gen, 200.0, np.random.default_rng(5))
    hi = simulate_one(gen, 2000.0, np.random.default_rng(5))
    mask = basin_mask(gen.grid)
    var_lo = lo[-1, :, :, 0][mask].var()
    var_hi = hi[-1, :, :, 0][mask].var()
    assert var_hi < var_lo


def test_frozen_dynamics():
    gen = small_gen(n_sims=1, timesteps_out=5, gyre_amplitude=0.0,
                    kappa_nd_range=(0.0, 0.0))
    frames = simulate_one(gen, 1000.0, np.random.default_rng(1))
    for t in range(1, 5):
        assert np.array_equal(frames[t, :, :, :2], frames[0, :, :, :2])


def test_make_pairs_count_and_alignment():
    ens = generate_ensemble(small_gen())
    ds = make_pairs(ens)
    assert ds.inputs.shape == (3 * 3, 5, 16, 16)
    assert ds.targets.shape == (9, 4, 16, 16)
    # target of pair k is the state part of the next frame
    st = ens.states.astype(np.float64)
    assert np.array_equal(ds.inputs[0], st[0, 0].transpose(2, 0, 1))
    assert np.array_equal(ds.targets[0], st[0, 1, :, :, :4].transpose(2, 0, 1))
    assert np.array_equal(ds.inputs[3], st[1, 0].transpose(2, 0, 1))


def test_pairs_requires_two_frames():
    ens = generate_ensemble(small_gen(timesteps_out=1))
    with pytest.raises(OceanError):
        make_pairs(ens)


def test_split_counts_and_remainder_to_train():
    ens = generate_ensemble(small_gen(n_sims=12, timesteps_out=2))
    ds = split(make_pairs(ens), (2 / 3, 1 / 6, 1 / 6), seed=0)
    tags = list(ds.split_of_sim.values())
    assert tags.count("train") == 8
    assert tags.count("val") == 2
    assert tags.count("test") == 2
    # remainder case: 0.7/0.15/0.15 over 12 sims floors val/test to 1 each
    ds2 = split(make_pairs(ens), (0.7, 0.15, 0.15), seed=0)
    tags2 = list(ds2.split_of_sim.values())
    assert (tags2.count("train"), tags2.count("val"), tags2.count("test")) == (10, 1, 1)


def test_split_errors():
    ens = generate_ensemble(small_gen(n_sims=2, timesteps_out=2))
    ds = make_pairs(ens)
    with pytest.raises(OceanError):
        split(ds, (0.5, 0.25, 0.25), seed=0)  # test split would be empty
    with pytest.raises(OceanError):
        split(ds, (0.5, 0.5, 0.5), seed=0)


def test_normalize_train_stats_and_roundtrip():
    ens = generate_ensemble(small_gen(n_sims=6))
    ds = split(make_pairs(ens), (2 / 3, 1 / 6, 1 / 6), seed=1)
    stats = normalize_fit(ds)
    norm = normalize_apply(ds, stats)
    tr = norm.indices("train")
    x = norm.inputs[tr][:, :4][:, :, norm.mask]
    assert np.allclose(x.mean(axis=(0, 2)), 0.0, atol=1e-10)
    assert np.allclose(x.std(axis=(0, 2)), 1.0, atol=1e-10)
    kv = norm.inputs[:, 4][:, norm.mask]
    assert kv.min() >= -1e-12 and kv.max() <= 1 + 1e-12
    assert np.all(norm.inputs[:, :, ~norm.mask] == 0)
    back = normalize_invert_states(norm.targets, stats, norm.mask)
    assert np.allclose(back, ds.targets, atol=1e-10)
    assert norm.climatology is not None
    assert norm.climatology.shape == (4, 16, 16)
    with pytest.raises(OceanError):
        normalize_apply(norm, stats)


def test_normalize_requires_split():
    ens = generate_ensemble(small_gen())
    ds = make_pairs(ens)
    with pytest.raises(OceanError):
        normalize_fit(ds)


def test_save_load_roundtrip(tmp_path):
    ens = generate_ensemble(small_gen())
    p = tmp_path / "ens.bin"
    save_ensemble(ens, p)
    assert (tmp_path / "ens.bin.json").exists()
    back = load_ensemble(p)
    assert np.array_equal(back.states, ens.states)
    assert np.allclose(back.kappas, ens.kappas)
    assert np.array_equal(back.mask, ens.mask)
    assert back.gen == ens.gen


def test_load_truncated_blob(tmp_path):
    ens = generate_ensemble(small_gen())
    p = tmp_path / "ens.bin"
    save_ensemble(ens, p)
    data = p.read_bytes()
    p.write_bytes(data[:-16])
    with pytest.raises(OceanError, match="blob"):
        load_ensemble(p)


def test_load_missing_sidecar(tmp_path):
    p = tmp_path / "ens.bin"
    p.write_bytes(b"\x00" * 64)
    with pytest.raises(OceanError, match="sidecar"):
        load_ensemble(p)


def test_required_substeps_scales_with_grid():
    g16 = ocean.required_substeps(small_gen(grid=16))
    g32 = ocean.required_substeps(small_gen(grid=32))
    assert g32 > g16
