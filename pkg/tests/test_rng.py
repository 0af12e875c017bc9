"""Splittable random stream determinism."""

import numpy as np
import pytest

from metadet.nn.rng import RngStream


def test_same_path_same_draws():
    a = RngStream(7).split(3).split(1)
    b = RngStream(7).split(3).split(1)
    np.testing.assert_array_equal(a.normal((4, 4)), b.normal((4, 4)))
    np.testing.assert_array_equal(a.uniform((8,)), b.uniform((8,)))


def test_different_seed_different_draws():
    a = RngStream(7).normal((16,))
    b = RngStream(8).normal((16,))
    assert not np.array_equal(a, b)


def test_sibling_streams_differ():
    root = RngStream(11)
    a = root.split(0).normal((16,))
    b = root.split(1).normal((16,))
    assert not np.array_equal(a, b)


def test_split_does_not_advance_parent():
    r1 = RngStream(5)
    _ = r1.split(9)         # splitting first...
    x1 = r1.normal((8,))
    r2 = RngStream(5)
    x2 = r2.normal((8,))    # ...versus drawing immediately
    np.testing.assert_array_equal(x1, x2)


def test_draw_order_independence_of_other_streams():
    # consuming one child heavily must not change a sibling's sequence
    root = RngStream(13)
    noisy = root.split(0)
    for _ in range(100):
        noisy.normal((64,))
    quiet = root.split(1).normal((8,))
    again = RngStream(13).split(1).normal((8,))
    np.testing.assert_array_equal(quiet, again)


def test_path_identity_vs_nested_split():
    direct = RngStream(3, path=(4, 5)).normal((4,))
    nested = RngStream(3).split(4).split(5).normal((4,))
    np.testing.assert_array_equal(direct, nested)


def test_negative_seed_rejected():
    with pytest.raises(ValueError):
        RngStream(-1)


def test_dtype_and_bounds():
    r = RngStream(17)
    u = r.uniform((1000,), low=2.0, high=3.0, dtype=np.float32)
    assert u.dtype == np.float32
    assert u.min() >= 2.0 and u.max() < 3.0
    n = r.normal((10,), std=0.0)
    assert np.all(n == 0.0)


def test_permutation_and_choice_deterministic():
    p1 = RngStream(19).permutation(10)
    p2 = RngStream(19).permutation(10)
    np.testing.assert_array_equal(p1, p2)
    assert sorted(p1.tolist()) == list(range(10))
    c1 = RngStream(23).choice(["a", "b", "c"])
    c2 = RngStream(23).choice(["a", "b", "c"])
    assert c1 == c2
