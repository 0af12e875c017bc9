"""Momentum SGD recurrence and the warmup schedule."""

import numpy as np

from metadet.nn import Tensor, ops
from metadet.nn.optim import SGD, warmup_lr
from metadet.nn.tensor import Parameter


def test_sgd_matches_hand_recurrence():
    p = Parameter(np.array([1.0, -2.0]), "p")
    opt = SGD([p], lr=0.1, momentum=0.9)
    v = np.zeros(2)
    x = np.array([1.0, -2.0])
    for step in range(5):
        g = 2.0 * x                       # d/dx sum(x^2)
        p.grad = g.copy()
        opt.step()
        v = 0.9 * v + g
        x = x - 0.1 * v
        np.testing.assert_allclose(p.data, x, rtol=1e-12)
    assert p.grad is None                 # step() consumes the gradient


def test_sgd_skips_missing_grads():
    p1 = Parameter(np.ones(2), "a")
    p2 = Parameter(np.ones(2), "b")
    opt = SGD([p1, p2], lr=0.5, momentum=0.0)
    p1.grad = np.ones(2)
    opt.step()
    np.testing.assert_array_equal(p1.data, np.full(2, 0.5))
    np.testing.assert_array_equal(p2.data, np.ones(2))


def test_sgd_descends_quadratic():
    p = Parameter(np.array([5.0]), "p")
    opt = SGD([p], lr=0.05, momentum=0.9)
    for _ in range(200):
        loss = ops.sum_all(p * p)
        loss.backward()
        opt.step()
    assert abs(p.data[0]) < 1e-3


def test_sgd_lr_is_mutable():
    p = Parameter(np.array([1.0]), "p")
    opt = SGD([p], lr=1.0, momentum=0.0)
    opt.lr = 0.25
    p.grad = np.array([1.0])
    opt.step()
    np.testing.assert_allclose(p.data, [0.75])


def test_zero_grad():
    p = Parameter(np.ones(3), "p")
    p.grad = np.ones(3)
    SGD([p], lr=0.1).zero_grad()
    assert p.grad is None


def test_warmup_schedule_shape():
    total, base = 200, 0.4
    lrs = [warmup_lr(i, total, base, warmup_frac=0.05) for i in range(total)]
    warm = 10                                    # round(200 * 0.05)
    assert lrs[0] == base / warm
    assert lrs[warm - 1] == base
    assert all(lr == base for lr in lrs[warm:])
    assert all(b >= a for a, b in zip(lrs, lrs[1:warm]))


def test_warmup_minimum_one_iteration():
    assert warmup_lr(0, 3, 1.0, warmup_frac=0.0) == 1.0
    assert warmup_lr(2, 3, 1.0, warmup_frac=0.0) == 1.0
