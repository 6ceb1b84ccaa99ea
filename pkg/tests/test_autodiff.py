from unittest import TestCase

import numpy as np

from urnn.autodiff import (Adam, Graph, OptimizerState, Tensor, adam_step, add, backward, clip_grad_norm, concat,
                           elementwise, exp, get_default_dtype, gradients, log, matmul, mean, mul, neg, no_grad,
                           relu, reshape, scale, set_default_dtype, sigmoid, slice_last, square, sub, tanh,
                           tensor_sum)
from urnn.exceptions import MissingGradientError, ShapeMismatchError

from helpers import numerical_gradient


class TestTensorGradients(TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(0)

    def assertGradientMatches(self, fn, tensors, tol=1e-6):
        root = fn()
        analytic = gradients(root, tensors)
        for tensor, grad in zip(tensors, analytic):
            expected = numerical_gradient(lambda: fn().item(), tensor)
            np.testing.assert_allclose(grad, expected, rtol=tol, atol=tol)

    def assertFiniteDifferences(self, fn, tensors):
        analytic = gradients(fn(), tensors)
        for tensor, grad in zip(tensors, analytic):
            expected = numerical_gradient(lambda: fn().item(), tensor, eps=1e-5)
            np.testing.assert_allclose(grad, expected, rtol=1e-4, atol=1e-7)

    def test_01_dense_layer(self):
        x = Tensor(self.rng.normal(size=(3, 4)), requires_grad=True)
        w = Tensor(self.rng.normal(size=(4, 2)), requires_grad=True)
        b = Tensor(self.rng.normal(size=(2,)), requires_grad=True)
        y = self.rng.normal(size=(3, 2))
        self.assertGradientMatches(lambda: tensor_sum(mul(tanh(add(matmul(x, w), b)), Tensor(y))), [x, w, b])

    def test_02_pointwise_ops(self):
        x = Tensor(self.rng.uniform(0.5, 2.0, size=(2, 3)), requires_grad=True)
        for op in ("tanh", "sigmoid", "exp", "log", "square"):
            with self.subTest(op=op):
                self.assertGradientMatches(lambda: tensor_sum(elementwise(op, x)), [x])

    def test_03_relu_away_from_kink(self):
        x = Tensor(np.array([[-1.5, 0.7], [2.0, -0.3]]), requires_grad=True)
        backward(tensor_sum(relu(x)))
        np.testing.assert_array_equal(x.grad, [[0.0, 1.0], [1.0, 0.0]])

    def test_04_shared_subexpression_accumulates(self):
        x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
        backward(tensor_sum(add(mul(x, x), x)))
        np.testing.assert_allclose(x.grad, 2 * x.data + 1)

    def test_05_backward_accumulates_across_calls(self):
        x = Tensor(np.array([2.0]), requires_grad=True)
        backward(tensor_sum(square(x)))
        backward(tensor_sum(square(x)))
        np.testing.assert_allclose(x.grad, [8.0])

    def test_06_gradients_leave_grad_untouched(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        grads = gradients(tensor_sum(square(x)), [x])
        self.assertIsNone(x.grad)
        np.testing.assert_allclose(grads[0], [2.0, 4.0])

    def test_07_unreached_leaf_gets_zero_gradient(self):
        x = Tensor(np.ones(2), requires_grad=True)
        unused = Tensor(np.ones(3), requires_grad=True)
        grads = gradients(tensor_sum(x), [x, unused])
        np.testing.assert_array_equal(grads[1], np.zeros(3))

    def test_08_structural_ops(self):
        a = Tensor(self.rng.normal(size=(2, 3)), requires_grad=True)
        b = Tensor(self.rng.normal(size=(2, 2)), requires_grad=True)
        weights = Tensor(self.rng.normal(size=(4, 2)))
        offset = a.data[:, :2].copy()

        def fn():
            joined = concat([a, b])
            part = slice_last(joined, 1, 5)
            stacked = concat([reshape(square(part), (4, 2)), sub(b, offset)], axis=0)
            return tensor_sum(mul(slice_last(reshape(stacked, (2, 6)), 0, 4), weights.data.reshape(2, 4)))

        self.assertGradientMatches(fn, [a, b])

    def test_09_mean(self):
        x = Tensor(self.rng.normal(size=(4, 2)), requires_grad=True)
        backward(mean(x))
        np.testing.assert_allclose(x.grad, np.full((4, 2), 1 / 8))

    def test_10_no_grad_records_nothing(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            y = tensor_sum(exp(x))
        self.assertFalse(y.requires_grad)
        self.assertTrue(y.is_leaf)
        y2 = tensor_sum(exp(x))
        self.assertTrue(y2.requires_grad)

    def test_11_graph_is_topological(self):
        x = Tensor(np.ones(2), requires_grad=True)
        h = tanh(x)
        root = tensor_sum(add(h, sigmoid(h)))
        nodes = Graph.from_root(root).nodes
        position = {id(n): i for i, n in enumerate(nodes)}
        for node in nodes:
            for parent in node._parents:
                if parent.requires_grad:
                    self.assertLess(position[id(parent)], position[id(node)])
        self.assertIs(nodes[-1], root)

    def test_12_shape_mismatch(self):
        with self.assertRaises(ShapeMismatchError):
            add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))
        with self.assertRaises(ShapeMismatchError):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
        with self.assertRaises(ShapeMismatchError):
            concat([Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3)))])

    def test_13_backward_needs_scalar(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with self.assertRaises(ShapeMismatchError):
            backward(square(x))

    def test_14_precision(self):
        try:
            set_default_dtype("float32")
            self.assertEqual(Tensor([1.0, 2.0]).data.dtype, np.float32)
        finally:
            set_default_dtype("float64")
        self.assertIs(get_default_dtype(), np.float64)
        with self.assertRaises(ValueError):
            set_default_dtype("float16")

    def test_15_log_of_sigmoid_chain(self):
        x = Tensor(self.rng.normal(size=(3,)), requires_grad=True)
        self.assertGradientMatches(lambda: tensor_sum(log(sigmoid(x))), [x])

    def test_16_every_op_on_random_instances(self):
        unary = {
            "tanh": tanh, "sigmoid": sigmoid, "exp": exp, "square": square, "neg": neg, "mean": mean,
            "log": lambda t: log(add(square(t), Tensor(np.full(t.shape, 0.5)))),
            "relu": relu,
            "scale": lambda t: scale(t, -1.7),
            "slice_last": lambda t: slice_last(t, 1, 3),
            "reshape": lambda t: reshape(t, (4, 3)),
        }
        binary = {"add": add, "sub": sub, "mul": mul, "concat": lambda a, b: concat([a, b], axis=0)}
        for seed in range(20):
            rng = np.random.default_rng(100 + seed)
            values = rng.normal(size=(3, 4))
            # keep relu away from its kink
            values[np.abs(values) < 0.05] += 0.1
            weights = Tensor(rng.normal(size=(3, 4)))
            for name, op in unary.items():
                with self.subTest(op=name, seed=seed):
                    x = Tensor(values.copy(), requires_grad=True)

                    def fn():
                        out = op(x)
                        return tensor_sum(mul(out, weights)) if out.shape == (3, 4) else tensor_sum(tanh(out))

                    self.assertFiniteDifferences(fn, [x])
            for name, op in binary.items():
                with self.subTest(op=name, seed=seed):
                    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
                    b = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
                    self.assertFiniteDifferences(lambda: tensor_sum(tanh(op(a, b))), [a, b])
            with self.subTest(op="matmul", seed=seed):
                a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
                b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
                self.assertFiniteDifferences(lambda: tensor_sum(tanh(matmul(a, b))), [a, b])

    def test_17_matmul_sum_gradient_is_column_sums(self):
        a = Tensor(self.rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(self.rng.normal(size=(4, 2)))
        backward(tensor_sum(matmul(a, b)))
        np.testing.assert_allclose(a.grad, np.tile(b.data.sum(axis=1), (3, 1)))


class TestOptimizer(TestCase):

    def test_01_first_adam_step_moves_by_lr(self):
        x = Tensor(np.array([3.0]), requires_grad=True)
        optimizer = Adam([x], lr=0.1)
        backward(tensor_sum(square(x)))
        optimizer.step()
        np.testing.assert_allclose(x.data, [2.9], atol=1e-9)

    def test_02_adam_minimizes_quadratic(self):
        x = Tensor(np.array([1.0]), requires_grad=True)
        optimizer = Adam([x], lr=0.05)
        for _ in range(200):
            optimizer.zero_grad()
            backward(tensor_sum(square(x)))
            optimizer.step()
        self.assertLess(abs(x.data[0]), 0.01)

    def test_03_step_without_gradient(self):
        x = Tensor(np.ones(2), requires_grad=True, name="x")
        with self.assertRaises(MissingGradientError):
            Adam([x]).step()
        with self.assertRaises(MissingGradientError):
            adam_step(OptimizerState(), [x], [])

    def test_04_adam_step_leaves_gradients(self):
        x = Tensor(np.ones(2), requires_grad=True)
        grad = np.array([0.5, -0.5])
        state = OptimizerState(lr=0.01)
        adam_step(state, [x], [grad])
        np.testing.assert_array_equal(grad, [0.5, -0.5])
        self.assertEqual(state.step, 1)

    def test_05_clip_multi_tensor(self):
        a = Tensor(np.zeros(2), requires_grad=True)
        b = Tensor(np.zeros(3), requires_grad=True)
        a.grad = np.array([3.0, 4.0])
        b.grad = np.array([12.0, 0.0, 0.0])
        factor = clip_grad_norm([a, b], 1.0)
        self.assertAlmostEqual(factor, 1 / 13, places=12)
        total = np.sqrt(np.sum(a.grad ** 2) + np.sum(b.grad ** 2))
        self.assertAlmostEqual(total, 1.0, delta=1e-12)

    def test_06_clip_within_bound_is_noop(self):
        a = Tensor(np.zeros(2), requires_grad=True)
        a.grad = np.array([0.3, 0.4])
        self.assertEqual(clip_grad_norm([a], 1.0), 1.0)
        np.testing.assert_array_equal(a.grad, [0.3, 0.4])
        with self.assertRaises(ValueError):
            clip_grad_norm([a], 0.0)

    def test_07_lr_is_adjustable(self):
        x = Tensor(np.ones(1), requires_grad=True)
        optimizer = Adam([x], lr=1e-3)
        optimizer.lr = optimizer.lr * 0.5
        self.assertEqual(optimizer.state.lr, 5e-4)

    def test_08_zero_gradient_is_a_noop(self):
        x = Tensor(np.array([0.25, -1.5]), requires_grad=True)
        state = OptimizerState(lr=0.1)
        adam_step(state, [x], [np.zeros(2)])
        np.testing.assert_array_equal(x.data, [0.25, -1.5])

    def test_09_clip_single_tensor(self):
        a = Tensor(np.zeros(2), requires_grad=True)
        a.grad = np.array([3.0, 4.0])
        self.assertAlmostEqual(clip_grad_norm([a], 1.0), 0.2, places=12)
        np.testing.assert_allclose(a.grad, [0.6, 0.8], atol=1e-12)

    def test_10_adam_step_is_deterministic(self):
        results = []
        for _ in range(2):
            x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
            state = OptimizerState(lr=0.01)
            for grad in ([0.3, -0.1], [0.2, 0.4]):
                adam_step(state, [x], [np.array(grad)])
            results.append(x.data.copy())
        np.testing.assert_array_equal(results[0], results[1])
