import numpy as np
import pytest

import hynd


def numpy_causal_conv_1d(u, h):
    out = np.zeros_like(u)
    for i in range(len(u)):
        for j in range(len(h)):
            if i - j >= 0:
                out[i] += h[j] * u[i - j]
    return out


def test_conv_matches_numpy_oracle_1d():
    rng = np.random.default_rng(3)
    u = rng.uniform(-1, 1, size=17)
    h = rng.uniform(-1, 1, size=5)
    got = hynd.fft_conv_causal(u, h)
    np.testing.assert_allclose(got, numpy_causal_conv_1d(u, h), rtol=0, atol=1e-12)


def test_conv_matches_direct_oracle_2d():
    rng = np.random.default_rng(4)
    u = rng.uniform(-1, 1, size=(9, 7))
    h = rng.uniform(-1, 1, size=(4, 3))
    np.testing.assert_allclose(
        hynd.fft_conv_causal(u, h), hynd.direct_conv_oracle(u, h), rtol=0, atol=1e-12
    )


def test_layer_forward_shape_and_causality():
    layer = hynd.HyenaLayer(channels=2, order=2, axes=[8, 8], seed=5)
    rng = np.random.default_rng(5)
    tokens = rng.uniform(-1, 1, size=(1, 8, 8, 2))
    base = layer(tokens)
    assert base.shape == tokens.shape

    bumped = tokens.copy()
    bumped[0, 7, 7, 0] += 0.5  # the last site influences nothing else
    moved = layer(bumped)
    assert abs(moved[0, 0, 0, 0] - base[0, 0, 0, 0]) < 1e-12
    assert abs(moved[0, 7, 7, 0] - base[0, 7, 7, 0]) > 1e-9


def test_layer_is_grid_size_independent():
    layer = hynd.HyenaLayer(channels=4, axes=[8, 8], seed=9)
    small = layer(np.zeros((1, 4, 4, 4)))
    large = layer(np.zeros((1, 16, 16, 4)))
    assert small.shape == (1, 4, 4, 4)
    assert large.shape == (1, 16, 16, 4)
    assert layer.parameter_count > 0


def test_product_kernels_are_rank_one_and_dense_ones_are_not():
    separable = hynd.build_kernel("product_nd", channels=6, order=1, axes=[8, 8], seed=2)
    for channel in separable:
        assert hynd.matrix_rank(channel) == 1
    dense = hynd.build_kernel("implicit_nd", channels=6, order=1, axes=[8, 8], seed=2)
    assert max(hynd.matrix_rank(c) for c in dense) > 1


def test_kernel_slices_match_generator_output():
    layer = hynd.HyenaLayer(channels=3, order=2, axes=[6, 6], seed=7)
    for step in range(2):
        kernel = layer.kernel(step, [6, 6])
        assert kernel.shape == (3, 6, 6)
    with pytest.raises(Exception):
        layer.kernel(2, [6, 6])  # step beyond the recurrence depth


def test_identity_theorems_all_pass():
    report = hynd.verify_identity_theorems()
    assert report["all_pass"] is True
    assert len(report["cases"]) == 34
    assert "FAIL" not in report["text"]
