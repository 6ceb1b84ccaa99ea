from unittest import TestCase

import numpy as np

from urnn.autodiff import Tensor, concat, gradients, tensor_sum
from urnn.exceptions import ShapeMismatchError
from urnn.nn import (CellKind, EncoderVariant, cell_step, embed, encode, encode_bi, encode_plain, encode_reversed_u,
                     encode_u, encoding_dim, init_embedding, init_encoder, init_params, zero_state)

from helpers import numerical_gradient

E_DIM, HIDDEN = 3, 4


class TestEncoders(TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(11)
        self.embeds = [Tensor(self.rng.normal(size=(2, E_DIM))) for _ in range(3)]

    def unroll(self, cell, inputs):
        state = zero_state(cell.kind, 2, cell.hidden_dim)
        for x in inputs:
            state = cell_step(cell.kind, cell, state, x)
        return state

    def test_01_u_encoder_trace(self):
        for kind in CellKind:
            with self.subTest(kind=kind):
                bwd = init_params(kind, E_DIM, HIDDEN, self.rng)
                fwd = init_params(kind, E_DIM + HIDDEN, HIDDEN, self.rng)
                e1, e2, e3 = self.embeds
                # h^b_3 = 0, h^b_2 reads e3, h^b_1 reads e3 then e2
                hb3 = zero_state(kind, 2, HIDDEN)
                hb2 = cell_step(kind, bwd, hb3, e3)
                hb1 = cell_step(kind, bwd, hb2, e2)
                state = zero_state(kind, 2, HIDDEN)
                for e, hb in ((e1, hb1), (e2, hb2), (e3, hb3)):
                    state = cell_step(kind, fwd, state, concat([e, hb.h]))
                encoding = encode_u(self.embeds, bwd, fwd)
                np.testing.assert_array_equal(encoding.h.data, state.h.data)
                self.assertIs(encoding.variant, EncoderVariant.U)
                if kind is CellKind.LSTM:
                    np.testing.assert_array_equal(encoding.c.data, state.c.data)

    def test_02_u_encoder_single_step_sees_no_future(self):
        bwd = init_params(CellKind.GRU, E_DIM, HIDDEN, self.rng)
        fwd = init_params(CellKind.GRU, E_DIM + HIDDEN, HIDDEN, self.rng)
        e = self.embeds[0]
        expected = cell_step(CellKind.GRU, fwd, zero_state(CellKind.GRU, 2, HIDDEN),
                             concat([e, Tensor(np.zeros((2, HIDDEN)))]))
        np.testing.assert_array_equal(encode_u([e], bwd, fwd).h.data, expected.h.data)

    def test_03_bi_encoder_oracle(self):
        fwd = init_params(CellKind.LSTM, E_DIM, HIDDEN, self.rng)
        bwd = init_params(CellKind.LSTM, E_DIM, HIDDEN, self.rng)
        forward = self.unroll(fwd, self.embeds)
        backward = self.unroll(bwd, self.embeds[::-1])
        encoding = encode_bi(self.embeds, fwd, bwd)
        np.testing.assert_array_equal(encoding.h.data, np.concatenate([forward.h.data, backward.h.data], axis=1))
        np.testing.assert_array_equal(encoding.c.data, np.concatenate([forward.c.data, backward.c.data], axis=1))
        self.assertEqual(encoding.h.shape, (2, encoding_dim(EncoderVariant.BI, HIDDEN)))

    def test_04_reversed_u_is_u_on_reversed_sequence(self):
        bwd = init_params(CellKind.GRU, E_DIM, HIDDEN, self.rng)
        fwd = init_params(CellKind.GRU, E_DIM + HIDDEN, HIDDEN, self.rng)
        reversed_u = encode_reversed_u(self.embeds, bwd, fwd)
        np.testing.assert_array_equal(reversed_u.h.data, encode_u(self.embeds[::-1], bwd, fwd).h.data)
        self.assertIs(reversed_u.variant, EncoderVariant.REVERSED_U)

    def test_05_plain_and_none(self):
        cell = init_params(CellKind.GRU, E_DIM, HIDDEN, self.rng)
        np.testing.assert_array_equal(encode_plain(self.embeds, cell).h.data, self.unroll(cell, self.embeds).h.data)
        params = init_encoder(EncoderVariant.NONE, CellKind.LSTM, E_DIM, HIDDEN, self.rng)
        self.assertEqual(params.cells, {})
        encoding = encode(params, self.embeds)
        np.testing.assert_array_equal(encoding.h.data, np.zeros((2, HIDDEN)))
        np.testing.assert_array_equal(encoding.c.data, np.zeros((2, HIDDEN)))

    def test_06_init_encoder_shapes(self):
        params = init_encoder(EncoderVariant.U, CellKind.LSTM, E_DIM, HIDDEN, self.rng)
        self.assertEqual(list(params.cells), ["bwd", "fwd"])
        self.assertEqual(params.cells["fwd"].input_dim, E_DIM + HIDDEN)
        self.assertEqual(params.cells["bwd"].input_dim, E_DIM)
        params = init_encoder(EncoderVariant.BI, CellKind.GRU, E_DIM, HIDDEN, self.rng)
        self.assertEqual(list(params.cells), ["fwd", "bwd"])
        self.assertEqual(encoding_dim(EncoderVariant.U, HIDDEN), HIDDEN)

    def test_07_backward_pass_receives_gradient(self):
        params = init_encoder(EncoderVariant.U, CellKind.GRU, E_DIM, HIDDEN, self.rng)
        w = params.cells["bwd"].w_ih

        def fn():
            return tensor_sum(encode(params, self.embeds).h)

        grad = gradients(fn(), [w])[0]
        self.assertGreater(np.abs(grad).max(), 0.0)
        np.testing.assert_allclose(grad, numerical_gradient(lambda: fn().item(), w), rtol=1e-6, atol=1e-8)

    def test_08_embedding(self):
        params = init_embedding(E_DIM, self.rng)
        velocity = self.rng.normal(size=(2, 2))
        out = embed([velocity], params)[0]
        np.testing.assert_allclose(out.data, velocity @ params.weight.data + params.bias.data)
        with self.assertRaises(ShapeMismatchError):
            embed([np.ones((2, 3))], params)
        with self.assertRaises(ValueError):
            embed([], params)

    def test_09_dimension_checks(self):
        bwd = init_params(CellKind.GRU, E_DIM, HIDDEN, self.rng)
        wrong = init_params(CellKind.GRU, E_DIM, HIDDEN, self.rng)
        with self.assertRaises(ShapeMismatchError):
            encode_u(self.embeds, bwd, wrong)

    def test_10_bi_encoder_oracle_on_random_instances(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            kind = CellKind.GRU if seed % 2 else CellKind.LSTM
            embeds = [Tensor(rng.normal(size=(2, E_DIM))) for _ in range(1 + seed % 5)]
            fwd = init_params(kind, E_DIM, HIDDEN, rng)
            bwd = init_params(kind, E_DIM, HIDDEN, rng)
            expected = np.concatenate([encode_plain(embeds, fwd).h.data, encode_plain(embeds[::-1], bwd).h.data],
                                      axis=1)
            np.testing.assert_array_equal(encode_bi(embeds, fwd, bwd).h.data, expected)

    def test_11_u_and_reversed_u_differ(self):
        different = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            kind = CellKind.GRU if seed < 10 else CellKind.LSTM
            embeds = [Tensor(rng.normal(size=(2, E_DIM))) for _ in range(4)]
            bwd = init_params(kind, E_DIM, HIDDEN, rng)
            fwd = init_params(kind, E_DIM + HIDDEN, HIDDEN, rng)
            u = encode_u(embeds, bwd, fwd).h.data
            reversed_u = encode_reversed_u(embeds, bwd, fwd).h.data
            different += not np.array_equal(u, reversed_u)
        self.assertGreaterEqual(different, 19)

    def test_12_encoding_depends_on_every_input(self):
        variants = [EncoderVariant.PLAIN, EncoderVariant.BI, EncoderVariant.U, EncoderVariant.REVERSED_U]
        for variant in variants:
            for seed in range(10):
                with self.subTest(variant=variant, seed=seed):
                    rng = np.random.default_rng(seed)
                    kind = CellKind.GRU if seed % 2 else CellKind.LSTM
                    params = init_encoder(variant, kind, E_DIM, HIDDEN, rng)
                    embeds = [Tensor(rng.normal(size=(2, E_DIM)), requires_grad=True) for _ in range(4)]

                    def fn():
                        return tensor_sum(encode(params, embeds).h)

                    for e, grad in zip(embeds, gradients(fn(), embeds)):
                        self.assertTrue(np.all(np.abs(grad).max(axis=1) > 0.0))
                        np.testing.assert_allclose(grad, numerical_gradient(lambda: fn().item(), e, eps=1e-5),
                                                   rtol=1e-4, atol=1e-9)

    def test_13_tokens(self):
        self.assertIs(EncoderVariant.from_token("reversed-u"), EncoderVariant.REVERSED_U)
        self.assertEqual(EncoderVariant.U.label, "U-")
        with self.assertRaises(ValueError):
            EncoderVariant.from_token("transformer")
