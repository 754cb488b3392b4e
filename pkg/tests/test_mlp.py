#!/usr/bin/python3

from __future__ import annotations

import unittest

import numpy as np
import numpy.testing as npt

from dreflex.learn import (BLOCK_ROWS, MLPWeights, adam_init, adam_step, init_mlp, mlp_forward,
                           mlp_logits, loss_and_gradient)


def zero_mlp(sizes):
    return MLPWeights([np.zeros((a, b)) for a, b in zip(sizes, sizes[1:])],
                      [np.zeros(b) for b in sizes[1:]])


class TestForward(unittest.TestCase):
    def test_zero_weights(self):
        theta = zero_mlp([4, 8, 8, 1])
        x = np.random.default_rng(0).normal(size=(10, 4))
        npt.assert_array_equal(mlp_forward(theta, x), np.full(10, 0.5))
        loss, _ = loss_and_gradient(theta, x, np.ones(10))
        self.assertAlmostEqual(loss, np.log(2.0))

    def test_batch_invariance(self):
        rng = np.random.default_rng(1)
        theta = init_mlp([6, 32, 32, 1], rng)
        x = rng.normal(size=(3 * BLOCK_ROWS + 7, 6))
        full = mlp_logits(theta, x)
        for start, stop in [(0, 1), (5, 6), (10, 90), (100, len(x))]:
            npt.assert_array_equal(mlp_logits(theta, x[start:stop]), full[start:stop])

    def test_dropout(self):
        rng = np.random.default_rng(2)
        theta = init_mlp([3, 16, 1], rng, dropout=0.5)
        x = rng.normal(size=(5, 3))
        with self.assertRaises(ValueError):
            mlp_logits(theta, x, training=True)
        a = mlp_logits(theta, x, True, np.random.default_rng(9))
        b = mlp_logits(theta, x, True, np.random.default_rng(9))
        npt.assert_array_equal(a, b)
        # inference ignores dropout
        npt.assert_array_equal(mlp_logits(theta, x), mlp_logits(theta, x))

    def test_invalid(self):
        with self.assertRaises(ValueError):
            MLPWeights([np.zeros((3, 4)), np.zeros((5, 1))], [np.zeros(4), np.zeros(1)])
        with self.assertRaises(ValueError):
            MLPWeights([np.zeros((3, 2))], [np.zeros(2)])
        with self.assertRaises(ValueError):
            MLPWeights([np.zeros((3, 1))], [np.zeros(1)], dropout=1.0)

    def test_sizes(self):
        theta = init_mlp([5, 7, 1], np.random.default_rng(0))
        self.assertEqual(theta.sizes, [5, 7, 1])
        self.assertTrue(theta.finite)
        theta.biases[0][0] = np.nan
        self.assertFalse(theta.finite)


class TestGradient(unittest.TestCase):
    def test_finite_differences(self):
        rng = np.random.default_rng(3)
        theta = init_mlp([4, 6, 5, 1], rng)
        for b in theta.biases:
            b += rng.normal(scale=0.1, size=b.shape)
        x = rng.normal(size=(12, 4))
        y = (rng.random(12) < 0.5).astype(float)
        _, grad = loss_and_gradient(theta, x, y)

        eps = 1e-6
        for p, g in zip(theta.params(), grad.params()):
            flat = p.reshape(-1)
            numeric = np.zeros(flat.size)
            for k in range(flat.size):
                saved = flat[k]
                flat[k] = saved + eps
                up, _ = loss_and_gradient(theta, x, y)
                flat[k] = saved - eps
                down, _ = loss_and_gradient(theta, x, y)
                flat[k] = saved
                numeric[k] = (up - down) / (2 * eps)
            npt.assert_allclose(g.reshape(-1), numeric, rtol=1e-4, atol=1e-7)


class TestAdam(unittest.TestCase):
    def test_first_step(self):
        rng = np.random.default_rng(4)
        theta = init_mlp([3, 4, 1], rng)
        grad = MLPWeights([rng.normal(size=w.shape) for w in theta.weights],
                          [rng.normal(size=b.shape) for b in theta.biases])
        new, state = adam_step(theta, grad, adam_init(theta), 1e-3)
        self.assertEqual(state.t, 1)
        for p, q, g in zip(theta.params(), new.params(), grad.params()):
            npt.assert_allclose(p - q, 1e-3 * np.sign(g), rtol=1e-4)

    def test_zero_gradient(self):
        theta = init_mlp([3, 4, 1], np.random.default_rng(5))
        grad = zero_mlp([3, 4, 1])
        new, _ = adam_step(theta, grad, adam_init(theta), 1e-2)
        for p, q in zip(theta.params(), new.params()):
            npt.assert_array_equal(p, q)

    def test_loss_decreases(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(200, 2))
        y = (x[:, 0] + x[:, 1] > 0).astype(float)
        theta = zero_mlp([2, 1])
        state = adam_init(theta)
        first, _ = loss_and_gradient(theta, x, y)
        for _ in range(300):
            _, grad = loss_and_gradient(theta, x, y)
            theta, state = adam_step(theta, grad, state, 1e-2)
        last, _ = loss_and_gradient(theta, x, y)
        self.assertLess(last, 0.5 * first)
        self.assertGreater(np.mean((mlp_forward(theta, x) > 0.5) == y), 0.95)


if __name__ == '__main__':
    unittest.main()
