import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparseadv.image import check_image, l0_pixel_distance, linf_distance, set_pixel

from oracles import l0_loop, linf_loop


def test_l0_identical_is_zero(rng):
    a = rng.random((3, 4, 3))
    assert l0_pixel_distance(a, a.copy()) == 0


def test_l0_counts_pixel_once_per_channel_change():
    a = np.zeros((2, 2, 3))
    b = a.copy()
    b[1, 0, 0] = 0.5
    assert l0_pixel_distance(a, b) == 1
    b[1, 0, 2] = 0.7
    assert l0_pixel_distance(a, b) == 1


def test_l0_matches_loop_oracle(rng):
    for _ in range(20):
        a = rng.random((4, 4, 1))
        b = a.copy()
        mask = rng.random((4, 4)) < 0.4
        b[mask] = rng.random((mask.sum(), 1))
        assert l0_pixel_distance(a, b) == l0_loop(a, b)


def test_l0_exact_comparison_no_tolerance():
    a = np.full((1, 1, 1), 0.5)
    b = a + 1e-17 * 0  # identical
    c = np.nextafter(a, 1.0)
    assert l0_pixel_distance(a, b) == 0
    assert l0_pixel_distance(a, c) == 1


def test_shape_mismatch_raises():
    with pytest.raises(ValueError):
        l0_pixel_distance(np.zeros((2, 2, 1)), np.zeros((2, 3, 1)))
    with pytest.raises(ValueError):
        linf_distance(np.zeros((2, 2, 1)), np.zeros((2, 2, 3)))


def test_linf(rng):
    a = rng.random((3, 3, 3))
    assert linf_distance(a, a) == 0.0
    b = a.copy()
    b[1, 2, 1] = a[1, 2, 1] + 0.3 if a[1, 2, 1] < 0.7 else a[1, 2, 1] - 0.3
    assert linf_distance(a, b) == pytest.approx(0.3, abs=1e-15)
    for _ in range(10):
        a, b = rng.random((5, 4, 3)), rng.random((5, 4, 3))
        assert linf_distance(a, b) == linf_loop(a, b)


def test_set_pixel(rng):
    x = rng.random((3, 3, 3))
    same = set_pixel(x, (1, 1), x[1, 1])
    assert np.array_equal(same, x)
    y = set_pixel(x, (0, 2), [1.0, 0.0, 0.5])
    assert l0_pixel_distance(x, y) == 1
    assert np.array_equal(y[0, 2], [1.0, 0.0, 0.5])
    z = set_pixel(set_pixel(x, (2, 2), [0, 0, 0]), (2, 2), [1, 1, 1])
    assert np.array_equal(z[2, 2], [1, 1, 1])
    assert l0_pixel_distance(x, z) <= 1
    assert not np.shares_memory(x, y)


def test_set_pixel_errors():
    x = np.zeros((2, 2, 1))
    with pytest.raises(IndexError):
        set_pixel(x, (2, 0), 0.5)
    with pytest.raises(IndexError):
        set_pixel(x, (0, -1), 0.5)
    with pytest.raises(ValueError):
        set_pixel(x, (0, 0), 1.5)


def test_check_image_rejects_bad_input():
    with pytest.raises(ValueError):
        check_image(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        check_image(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        check_image(np.full((2, 2, 1), 1.1))


images = st.integers(1, 4).flatmap(
    lambda n: st.lists(st.lists(st.sampled_from([0.0, 0.25, 1.0]), min_size=n, max_size=n), min_size=3, max_size=3)
)


@settings(max_examples=200, deadline=None)
@given(images)
def test_l0_metric_axioms(rows):
    a, b, c = (np.array(r).reshape(1, -1, 1) for r in rows)
    d = a.shape[1]
    assert l0_pixel_distance(a, b) == l0_pixel_distance(b, a)
    assert (l0_pixel_distance(a, b) == 0) == np.array_equal(a, b)
    assert l0_pixel_distance(a, c) <= l0_pixel_distance(a, b) + l0_pixel_distance(b, c)
    assert l0_pixel_distance(a, b) <= d


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2), st.integers(0, 2), st.floats(0, 1))
def test_set_pixel_changes_at_most_one(r, c, v):
    x = np.linspace(0, 1, 27).reshape(3, 3, 3)
    assert l0_pixel_distance(x, set_pixel(x, (r, c), v)) in (0, 1)
