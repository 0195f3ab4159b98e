import threading

import numpy as np
import pytest

from sweepdepth.core.boost import (BoostTriple, blend, blend_weights, intermediate_size, make_triple,
                                   normalized_mean_disparity, normalized_positions)
from sweepdepth.core.errors import DegenerateError


@pytest.fixture
def random_triple():
    rng = np.random.default_rng(5)
    return BoostTriple(*(rng.uniform(0.01, 0.4, size=(25, 40)) for _ in range(3)))


def test_equal_estimates_are_a_fixed_point():
    disparity = np.random.default_rng(0).uniform(0.05, 0.3, size=(5, 5))
    np.testing.assert_allclose(blend(BoostTriple(disparity, disparity, disparity)), disparity, rtol=0, atol=1e-12)


def test_blend_stays_within_the_estimates(random_triple):
    boosted = blend(random_triple)
    stacked = np.stack([random_triple.full, random_triple.reduced, random_triple.augmented])
    assert np.all(boosted >= stacked.min(axis=0) - 1e-12)
    assert np.all(boosted <= stacked.max(axis=0) + 1e-12)


def test_literal_denominator_halves_a_constant_map():
    constant = np.full((3, 3), 0.2)
    boosted = blend(BoostTriple(constant, constant, constant), literal=True)
    # D̄ = 1: (1 + 1 + 0)·c / (2 + 1 + 1)
    np.testing.assert_allclose(boosted, 0.1)


def test_weights_favor_reduced_pass_for_near_objects():
    means = np.linspace(0.0, 1.0, 21)
    w_full, w_reduced, w_augmented = blend_weights(means)
    total = w_full + w_reduced + w_augmented
    assert np.all(np.diff(w_reduced / total) >= 0.0)
    assert np.all(np.diff(w_augmented / total) <= 0.0)
    assert (w_full[-1], w_reduced[-1], w_augmented[-1]) == (1.0, 1.0, 0.0)


def test_zero_triple_is_degenerate():
    zeros = np.zeros((2, 2))
    with pytest.raises(DegenerateError, match="degenerate disparity"):
        normalized_mean_disparity(BoostTriple(zeros, zeros, zeros))


def test_triple_shapes_must_match():
    with pytest.raises(ValueError):
        BoostTriple(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((3, 2)))


def test_normalized_positions_corners():
    positions = normalized_positions(5, 7)
    np.testing.assert_allclose(positions[0, 0], [-1.0, -1.0])
    np.testing.assert_allclose(positions[-1, -1], [1.0, 1.0])
    np.testing.assert_allclose(positions[2, 3], [0.0, 0.0])


def test_constant_estimator_rescales_disparity():
    def constant(image, positions):
        return np.full(image.shape[:2], 0.3)

    triple = make_triple(constant, np.zeros((16, 20, 3)), max_workers=1)
    np.testing.assert_allclose(triple.full, 0.3)
    np.testing.assert_allclose(triple.reduced, 0.4, rtol=1e-12)
    np.testing.assert_allclose(triple.augmented, 0.24, rtol=1e-12)


def test_intermediate_passes_see_scaled_inputs():
    seen = []
    lock = threading.Lock()

    def recorder(image, positions):
        assert positions.shape == image.shape[:2] + (2,)
        with lock:
            seen.append(image.shape[:2])
        return np.ones(image.shape[:2])

    make_triple(recorder, np.zeros((96, 128, 3)))
    assert sorted(seen) == [(72, 96), (96, 128), (120, 160)]
    assert intermediate_size((96, 128), 0.75) == (72, 96)
