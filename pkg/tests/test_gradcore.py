import numpy as np
import pytest

from sweepdepth.core import gradcore as gc
from sweepdepth.core.errors import DegenerateError, NumericalError


@pytest.fixture
def rng():
    """Gerador semeado para as fixtures."""
    return np.random.default_rng(7)


def test_mul_backward_gives_product_rule(rng):
    tape = gc.Tape()
    a = tape.variable(rng.normal(size=(3, 4)))
    b = tape.variable(rng.normal(size=(3, 4)))
    loss = gc.reduce_sum(a * b)
    tape.backward(loss)
    np.testing.assert_allclose(a.adjoint, b.value)
    np.testing.assert_allclose(b.adjoint, a.value)


def test_broadcast_adjoint_is_summed():
    tape = gc.Tape()
    scale = tape.variable(2.0)
    grid = tape.constant(np.arange(6.0).reshape(2, 3))
    tape.backward(gc.reduce_sum(grid * scale))
    assert float(scale.adjoint) == pytest.approx(15.0)


def test_backward_twice_resets_adjoints():
    tape = gc.Tape()
    x = tape.variable(np.array([1.0, 2.0]))
    loss = gc.reduce_sum(x * x)
    tape.backward(loss)
    tape.backward(loss)
    np.testing.assert_allclose(x.adjoint, [2.0, 4.0])


def test_backward_requires_scalar():
    tape = gc.Tape()
    x = tape.variable(np.ones(3))
    with pytest.raises(ValueError):
        tape.backward(x * 2.0)


def test_div_by_tiny_value_is_degenerate():
    with pytest.raises(DegenerateError, match="degenerate divisor"):
        gc.div(np.ones(2), np.array([1.0, 1e-13]))


def test_ln_of_non_positive_raises():
    with pytest.raises(NumericalError):
        gc.ln(np.array([1.0, 0.0]))


def test_non_finite_values_are_rejected():
    with pytest.raises(NumericalError):
        gc.exp(np.array([1000.0]))


def test_pow_exponent_gradient_is_zero_at_zero_base():
    tape = gc.Tape()
    base = tape.constant(np.array([0.0, 2.0]))
    exponent = tape.variable(np.array([2.0, 3.0]))
    tape.backward(gc.reduce_sum(gc.power(base, exponent)))
    assert exponent.adjoint[0] == 0.0
    assert exponent.adjoint[1] == pytest.approx(8.0 * np.log(2.0))


def test_pow_rejects_negative_base_with_fractional_exponent():
    with pytest.raises(NumericalError):
        gc.power(np.array([-1.0]), np.array([0.5]))


def test_clamp_blocks_gradient_outside_range():
    tape = gc.Tape()
    x = tape.variable(np.array([-2.0, 0.5, 3.0]))
    tape.backward(gc.reduce_sum(gc.clamp(x, 0.0, 1.0)))
    np.testing.assert_array_equal(x.adjoint, [0.0, 1.0, 0.0])


def test_channel_softmax_sums_to_one(rng):
    probabilities = gc.channel_softmax(rng.normal(size=(5, 3, 4)) * 10.0)
    np.testing.assert_allclose(np.sum(probabilities.value, axis=0), 1.0)


def test_channel_softmax_needs_two_channels():
    with pytest.raises(ValueError):
        gc.channel_softmax(np.zeros((1, 2, 2)))


def test_bilinear_sample_at_integer_coords_reproduces_source(rng):
    src = rng.uniform(size=(4, 5, 3))
    xs, ys = np.meshgrid(np.arange(5.0), np.arange(4.0))
    sampled, valid = gc.bilinear_sample(src, np.stack([xs, ys], axis=-1))
    np.testing.assert_allclose(sampled.value, src)
    assert np.all(valid == 1.0)


def test_bilinear_sample_midpoint_averages_neighbors():
    src = np.array([[0.0, 1.0], [2.0, 3.0]])
    sampled, _ = gc.bilinear_sample(src, np.array([[[0.5, 0.5]]]))
    assert float(sampled.value[0, 0]) == pytest.approx(1.5)


def test_bilinear_sample_outside_is_zero_and_invalid():
    src = np.ones((3, 3))
    coords = np.array([[[-0.5, 1.0], [1.0, 2.5], [1.0, 1.0]]])
    sampled, valid = gc.bilinear_sample(src, coords)
    np.testing.assert_array_equal(valid[0], [0.0, 0.0, 1.0])
    np.testing.assert_array_equal(sampled.value[0], [0.0, 0.0, 1.0])


def test_sample_volume_uses_one_field_per_channel():
    volume = np.stack([np.zeros((2, 3)), np.ones((2, 3))])
    xs, ys = np.meshgrid(np.arange(3.0), np.arange(2.0))
    grid = np.stack([xs, ys], axis=-1)
    coords = np.stack([grid, grid + np.array([10.0, 0.0])])
    sampled, valid = gc.sample_volume(volume, coords)
    assert np.all(valid[0] == 1.0) and np.all(valid[1] == 0.0)
    np.testing.assert_array_equal(sampled.value[1], 0.0)


def test_conv2d_output_shape():
    out = gc.conv2d(np.ones((8, 12, 3)), np.ones((3, 3, 3, 4)), stride=2, padding=1)
    assert out.shape == (4, 6, 4)


def test_check_gradients_on_smooth_function(rng):
    def build(tape, params):
        x = params['x']
        return gc.reduce_sum(gc.tanh(x) * gc.exp(x * 0.3) + gc.softplus(x) * x)

    assert gc.check_gradients(build, {'x': rng.normal(size=(3, 4))}) < 1e-6


def test_check_gradients_on_bilinear_coords(rng):
    src = rng.uniform(size=(5, 6))
    coords = np.stack([rng.uniform(0.3, 4.7, size=(3, 3)), rng.uniform(0.3, 3.7, size=(3, 3))], axis=-1)

    def build(tape, params):
        sampled, _ = gc.bilinear_sample(params['src'], params['coords'])
        return gc.reduce_sum(sampled * sampled)

    assert gc.check_gradients(build, {'src': src, 'coords': coords}) < 1e-4


def test_operands_from_different_tapes_are_rejected():
    first = gc.Tape().variable(1.0)
    second = gc.Tape().variable(2.0)
    with pytest.raises(ValueError):
        first + second


def test_channel_softmax_values_and_shift_invariance():
    logits = np.array([10.0, 0.0, 0.0]).reshape(3, 1, 1)
    probabilities = gc.channel_softmax(logits).value[:, 0, 0]
    np.testing.assert_allclose(probabilities, [0.9999092, 4.54e-5, 4.54e-5], rtol=1e-4)
    np.testing.assert_allclose(gc.channel_softmax(logits + 3.0).value[:, 0, 0], probabilities, atol=1e-15)


def test_pow_exponent_adjoint_at_half():
    tape = gc.Tape()
    exponent = tape.variable(2.0)
    result = gc.power(0.5, exponent)
    tape.backward(result)
    assert float(result.value) == pytest.approx(0.25)
    assert float(exponent.adjoint) == pytest.approx(0.25 * np.log(0.5))


def test_repeated_backward_on_fresh_tapes_is_bit_identical(rng):
    logits = rng.normal(size=(3, 5, 6))
    coords = np.stack([rng.uniform(-0.5, 5.5, size=(3, 5, 6)), rng.uniform(-0.5, 4.5, size=(3, 5, 6))], axis=-1)

    def adjoint():
        tape = gc.Tape()
        variable = tape.variable(logits)
        sampled, valid = gc.sample_volume(gc.channel_softmax(variable), coords)
        tape.backward(gc.reduce_sum(sampled * sampled * valid))
        return variable.adjoint

    np.testing.assert_array_equal(adjoint(), adjoint())
