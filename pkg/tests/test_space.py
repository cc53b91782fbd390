import math

import numpy as np
import pytest

from gyrebo.space import (
    ACTIVATIONS, OPTIMIZERS, PADDING_TYPES,
    Categorical, Float, Integer, SearchSpace, SpaceError,
    default_space, sample_random,
)


def test_default_space_lookups():
    space = default_space()
    num_fno = space.lookup("num_FNO")
    assert (num_fno.lo, num_fno.hi) == (2, 16)
    num_modes = space.lookup("num_modes")
    assert (num_modes.lo, num_modes.hi) == (2, 32)
    alpha = space.lookup("alpha")
    assert (alpha.lo, alpha.hi, alpha.scale) == (0.0, 1.0, "linear")


def test_default_space_choice_lists():
    space = default_space()
    assert space.lookup("lift_act").choices == ACTIVATIONS
    assert space.lookup("proj_act").choices == ACTIVATIONS
    assert len(ACTIVATIONS) == 19
    assert space.lookup("optimizer").choices == OPTIMIZERS
    assert space.lookup("padding_type").choices == PADDING_TYPES
    assert space.lookup("lr").scale == "log"


def test_duplicate_names_rejected():
    with pytest.raises(SpaceError):
        SearchSpace([Integer("a", 0, 1), Float("a", 0, 1)])


def test_bad_ranges_rejected():
    with pytest.raises(SpaceError):
        Integer("x", 5, 5)
    with pytest.raises(SpaceError):
        Float("x", 1.0, 0.5)
    with pytest.raises(SpaceError):
        Categorical("x", ())
    with pytest.raises(SpaceError):
        Float("x", 0.0, 1.0, "log")


def test_single_choice_always_sampled():
    space = SearchSpace([Categorical("only", ("a",))])
    rng = np.random.default_rng(0)
    for _ in range(5):
        assert space.sample(rng) == {"only": "a"}


def test_sampling_covers_integer_range():
    # Empirical-frequency oracle: every integer value hit, chi-square sane.
    space = default_space()
    rng = np.random.default_rng(123)
    vals = [space.lookup("num_FNO").sample(rng) for _ in range(10_000)]
    counts = np.bincount(vals, minlength=17)[2:17]
    assert np.all(counts > 0)
    expected = 10_000 / 15
    chi2 = np.sum((counts - expected) ** 2 / expected)
    # 14 dof; p > 0.001 means chi2 below the 0.999 quantile (~36.1)
    assert chi2 < 36.12


def test_sampling_deterministic():
    space = default_space()
    a = sample_random(space, np.random.default_rng(42))
    b = sample_random(space, np.random.default_rng(42))
    assert a == b


def test_encode_bounds():
    space = default_space()
    cfg = space.sample(np.random.default_rng(0))
    cfg["num_FNO"] = 2
    assert space.encode(cfg)[space.names.index("num_FNO")] == 0.0
    cfg["num_FNO"] = 16
    assert space.encode(cfg)[space.names.index("num_FNO")] == 1.0


def test_encode_log_midpoint():
    # (log10(1e-4) - log10(1e-6)) / (log10(1e-2) - log10(1e-6)) = 0.5
    space = default_space()
    cfg = space.sample(np.random.default_rng(0))
    cfg["lr"] = 1e-4
    assert space.encode(cfg)[space.names.index("lr")] == pytest.approx(0.5)


def test_encode_unknown_dimension():
    space = default_space()
    with pytest.raises(SpaceError):
        space.encode({"nope": 1})


def test_encode_decode_roundtrip_numeric():
    space = default_space()
    rng = np.random.default_rng(7)
    for _ in range(200):
        cfg = space.sample(rng)
        back = space.decode(space.encode(cfg))
        for name in space.names:
            dim = space.lookup(name)
            if isinstance(dim, Integer):
                assert back[name] == cfg[name]
            elif isinstance(dim, Float):
                assert back[name] == pytest.approx(cfg[name], rel=1e-9, abs=1e-12)
            else:
                assert back[name] == cfg[name]


def test_validate_catches_out_of_range():
    space = default_space()
    cfg = space.sample(np.random.default_rng(0))
    space.validate(cfg)
    cfg["num_modes"] = 99
    with pytest.raises(SpaceError):
        space.validate(cfg)


def test_json_roundtrip():
    space = default_space()
    clone = SearchSpace.loads(space.dumps())
    assert clone.to_json_obj() == space.to_json_obj()
    rng = np.random.default_rng(3)
    cfg = space.sample(rng)
    clone.validate(cfg)
    assert np.array_equal(space.encode(cfg), clone.encode(cfg))
