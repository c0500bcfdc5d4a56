import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from muzero.codec import (CodecConfig, categorical_to_scalar, inverse_transform,
                          scalar_to_categorical, scalars_to_categorical, transform)

WIDE = CodecConfig.wide()


def test_transform_fixed_points_and_hand_values():
    assert transform(0.0) == 0.0
    assert transform(3.0, 0.001) == pytest.approx(1.003, abs=1e-12)
    assert transform(-8.0, 0.001) == pytest.approx(-2.008, abs=1e-12)


def test_transform_rejects_non_finite():
    for bad in (np.nan, np.inf, -np.inf):
        with pytest.raises(ValueError):
            transform(bad)
        with pytest.raises(ValueError):
            inverse_transform(bad)


def test_inverse_hand_value():
    assert inverse_transform(0.0) == 0.0
    assert inverse_transform(1.003, 0.001) == pytest.approx(3.0, rel=1e-6)


def test_roundtrip_grid():
    xs = np.linspace(-300, 300, 1000)
    back = inverse_transform(transform(xs))
    assert np.allclose(back, xs, rtol=1e-6, atol=1e-9)


def test_monotone_on_dense_grid():
    xs = np.linspace(-300, 300, 10_001)
    ys = transform(xs)
    assert np.all(np.diff(ys) > 0)


@given(st.floats(min_value=-300, max_value=300, allow_nan=False))
@settings(max_examples=300)
def test_oddness(x):
    assert transform(-x) == pytest.approx(-transform(x), abs=1e-12)


def test_projection_matches_worked_example():
    probs = scalar_to_categorical(3.7, WIDE)
    assert probs[WIDE.support_min + 300 + 3 - WIDE.support_min] >= 0  # shape sanity
    idx3 = 3 - WIDE.support_min
    assert probs[idx3] == pytest.approx(0.3)
    assert probs[idx3 + 1] == pytest.approx(0.7)
    assert probs.sum() == pytest.approx(1.0)
    assert np.count_nonzero(probs) == 2


def test_projection_integer_input_is_one_hot():
    probs = scalar_to_categorical(5.0, WIDE)
    assert probs[5 - WIDE.support_min] == 1.0
    assert np.count_nonzero(probs) == 1


def test_projection_clamps_out_of_range():
    probs = scalar_to_categorical(400.0, WIDE)
    assert probs[-1] == 1.0
    assert np.count_nonzero(probs) == 1
    lo = scalar_to_categorical(-1e9, WIDE)
    assert lo[0] == 1.0


@given(st.floats(min_value=-299.999, max_value=299.999, allow_nan=False))
@settings(max_examples=300)
def test_projection_expectation_exact(x):
    probs = scalar_to_categorical(x, WIDE)
    assert float(probs @ WIDE.supports) == pytest.approx(x, abs=1e-9)


def test_batched_projection_matches_scalar():
    xs = np.array([3.7, 5.0, -2.25, 301.0, -301.0])
    batched = scalars_to_categorical(xs, WIDE)
    for i, x in enumerate(xs):
        np.testing.assert_allclose(batched[i], scalar_to_categorical(x, WIDE), atol=1e-15)


def test_categorical_to_scalar_worked_example():
    cfg = CodecConfig(support_min=-20, support_max=20)
    one_hot = np.zeros(cfg.support_size)
    one_hot[0 - cfg.support_min] = 1.0
    assert categorical_to_scalar(one_hot, cfg) == pytest.approx(0.0)
    mix = np.zeros(cfg.support_size)
    mix[3 - cfg.support_min] = 0.3
    mix[4 - cfg.support_min] = 0.7
    assert categorical_to_scalar(mix, cfg) == pytest.approx(inverse_transform(3.7), rel=1e-12)


def test_categorical_to_scalar_rejects_unnormalized():
    cfg = CodecConfig()
    bad = np.zeros(cfg.support_size)
    bad[0] = 0.5
    with pytest.raises(ValueError):
        categorical_to_scalar(bad, cfg)


@given(st.floats(min_value=-250, max_value=250, allow_nan=False))
@settings(max_examples=300)
def test_full_roundtrip_within_supports(x):
    probs = scalar_to_categorical(transform(x), WIDE)
    back = categorical_to_scalar(probs, WIDE)
    assert abs(back - x) <= 1e-6 * max(1.0, abs(x))


def test_config_invariants():
    with pytest.raises(ValueError):
        CodecConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        CodecConfig(support_min=5, support_max=5)
    assert WIDE.support_size == 601
