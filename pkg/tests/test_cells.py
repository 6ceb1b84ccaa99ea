from unittest import TestCase

import numpy as np

from urnn.autodiff import Tensor, gradients, tensor_sum
from urnn.exceptions import ShapeMismatchError
from urnn.nn import CellKind, CellState, cell_step, init_params, zero_state

from helpers import numerical_gradient


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def reference_gru(params, h, x):
    size = params.hidden_dim
    gx = x @ params.w_ih.data + params.bias.data
    gh = h @ params.w_hh.data
    r = sigmoid(gx[:, :size] + gh[:, :size])
    z = sigmoid(gx[:, size:2 * size] + gh[:, size:2 * size])
    n = np.tanh(gx[:, 2 * size:] + r * gh[:, 2 * size:])
    return (1 - z) * n + z * h


def reference_lstm(params, h, c, x):
    size = params.hidden_dim
    gates = x @ params.w_ih.data + h @ params.w_hh.data + params.bias.data
    i, f = sigmoid(gates[:, :size]), sigmoid(gates[:, size:2 * size])
    g, o = np.tanh(gates[:, 2 * size:3 * size]), sigmoid(gates[:, 3 * size:])
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


class TestCells(TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(3)

    def test_01_gru_matches_reference(self):
        params = init_params(CellKind.GRU, 3, 4, self.rng)
        h = self.rng.normal(size=(2, 4))
        x = self.rng.normal(size=(2, 3))
        state = cell_step(CellKind.GRU, params, CellState(Tensor(h)), Tensor(x))
        np.testing.assert_allclose(state.h.data, reference_gru(params, h, x), rtol=1e-12, atol=1e-12)
        self.assertIsNone(state.c)

    def test_02_lstm_matches_reference(self):
        params = init_params(CellKind.LSTM, 3, 4, self.rng)
        h, c = self.rng.normal(size=(2, 4)), self.rng.normal(size=(2, 4))
        x = self.rng.normal(size=(2, 3))
        state = cell_step(CellKind.LSTM, params, CellState(Tensor(h), Tensor(c)), Tensor(x))
        expected_h, expected_c = reference_lstm(params, h, c, x)
        np.testing.assert_allclose(state.h.data, expected_h, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(state.c.data, expected_c, rtol=1e-12, atol=1e-12)

    def test_03_zero_gru_halves_state(self):
        params = init_params(CellKind.GRU, 2, 2, self.rng)
        for tensor in params.tensors().values():
            tensor.data[...] = 0.0
        state = cell_step(CellKind.GRU, params, CellState(Tensor([[1.0, -2.0]])), Tensor([[5.0, 7.0]]))
        np.testing.assert_array_equal(state.h.data, [[0.5, -1.0]])

    def test_04_lstm_forget_bias(self):
        params = init_params(CellKind.LSTM, 2, 3, self.rng)
        np.testing.assert_array_equal(params.bias.data[3:6], np.ones(3))
        self.assertEqual(params.w_ih.shape, (2, 12))
        self.assertEqual(params.w_hh.shape, (3, 12))
        self.assertEqual(params.parameter_count, 2 * 12 + 3 * 12 + 12)

    def test_05_gradients_match_finite_differences(self):
        for kind in CellKind:
            with self.subTest(kind=kind):
                params = init_params(kind, 3, 2, self.rng)
                x = Tensor(self.rng.normal(size=(2, 3)))
                state = zero_state(kind, 2, 2)
                state.h.data[...] = self.rng.normal(size=(2, 2))

                def fn():
                    first = cell_step(kind, params, state, x)
                    return tensor_sum(cell_step(kind, params, first, x).h)

                tensors = list(params.tensors().values())
                for tensor, grad in zip(tensors, gradients(fn(), tensors)):
                    expected = numerical_gradient(lambda: fn().item(), tensor)
                    np.testing.assert_allclose(grad, expected, rtol=1e-6, atol=1e-8)

    def test_06_step_does_not_mutate_state(self):
        params = init_params(CellKind.LSTM, 2, 2, self.rng)
        state = zero_state(CellKind.LSTM, 1, 2)
        cell_step(CellKind.LSTM, params, state, Tensor([[1.0, 1.0]]))
        np.testing.assert_array_equal(state.h.data, np.zeros((1, 2)))
        np.testing.assert_array_equal(state.c.data, np.zeros((1, 2)))

    def test_07_shape_and_kind_errors(self):
        params = init_params(CellKind.GRU, 3, 2, self.rng)
        with self.assertRaises(ShapeMismatchError):
            cell_step(CellKind.GRU, params, zero_state(CellKind.GRU, 1, 2), Tensor(np.ones((1, 4))))
        with self.assertRaises(ShapeMismatchError):
            cell_step(CellKind.GRU, params, zero_state(CellKind.GRU, 1, 5), Tensor(np.ones((1, 3))))
        with self.assertRaises(ValueError):
            cell_step(CellKind.LSTM, params, zero_state(CellKind.LSTM, 1, 2), Tensor(np.ones((1, 3))))
        with self.assertRaises(ValueError):
            init_params(CellKind.GRU, 0, 2, self.rng)

    def test_08_parameter_counts(self):
        self.assertEqual(init_params(CellKind.GRU, 2, 4, self.rng).parameter_count, 84)
        self.assertEqual(init_params(CellKind.LSTM, 2, 4, self.rng).parameter_count, 112)

    def test_09_same_seed_same_params(self):
        for kind in CellKind:
            with self.subTest(kind=kind):
                first = init_params(kind, 3, 5, np.random.default_rng(42))
                second = init_params(kind, 3, 5, np.random.default_rng(42))
                for name, tensor in first.tensors().items():
                    np.testing.assert_array_equal(tensor.data, second.tensors()[name].data)
                bound = 1.0 / np.sqrt(5)
                self.assertLessEqual(np.abs(first.w_hh.data).max(), bound)

    def test_10_zero_lstm_outputs_zero(self):
        params = init_params(CellKind.LSTM, 2, 3, self.rng)
        for tensor in params.tensors().values():
            tensor.data[...] = 0.0
        state = cell_step(CellKind.LSTM, params, zero_state(CellKind.LSTM, 1, 3), Tensor([[4.0, -9.0]]))
        np.testing.assert_array_equal(state.h.data, np.zeros((1, 3)))
        np.testing.assert_array_equal(state.c.data, np.zeros((1, 3)))

    def test_11_gradient_reaches_first_input(self):
        for kind in CellKind:
            with self.subTest(kind=kind):
                params = init_params(kind, 3, 4, self.rng)
                inputs = [Tensor(self.rng.normal(size=(1, 3)), requires_grad=True) for _ in range(8)]

                def fn():
                    state = zero_state(kind, 1, 4)
                    for x in inputs:
                        state = cell_step(kind, params, state, x)
                    return tensor_sum(state.h)

                grad = gradients(fn(), [inputs[0]])[0]
                self.assertGreater(np.abs(grad).max(), 0.0)
                np.testing.assert_allclose(grad, numerical_gradient(lambda: fn().item(), inputs[0], eps=1e-5),
                                           rtol=1e-4, atol=1e-9)

    def test_12_tokens(self):
        self.assertIs(CellKind.from_token("GRU"), CellKind.GRU)
        with self.assertRaises(ValueError):
            CellKind.from_token("rnn")
