import unittest

import numpy as np

from csl_reid.backbone import backbone_init, embed, feature_maps, nonlocal_block, nonlocal_init
from csl_reid.config import Modality
from csl_reid.numerics import ops
from csl_reid.numerics.tensor import ParamStore, precision


def _softmax(x):
    e = np.exp(x - x.max())
    return e / e.sum()


def direct_nonlocal(x, params):
    """Loop-by-loop evaluation of the residual attention block for one sample."""

    def conv1x1(conv, v):
        return np.einsum("oi,ip->op", conv.weight.data[:, :, 0, 0], v) + conv.bias.data[:, None]

    c, h, w = x.shape
    flat = x.reshape(c, h * w)
    theta, phi, g = conv1x1(params.theta, flat), conv1x1(params.phi, flat), conv1x1(params.g, flat)
    attended = np.zeros_like(g)
    for i in range(h * w):
        weights = _softmax(theta[:, i] @ phi)
        attended[:, i] = g @ weights
    return (flat + conv1x1(params.w_z, attended)).reshape(c, h, w)


class EmbedTest(unittest.TestCase):
    def test_default_shape_contract(self):
        store = ParamStore()
        params = backbone_init(5, np.random.default_rng(0), store)
        x = np.random.default_rng(1).uniform(size=(2, 3, 64, 32)).astype(np.float32)
        features, logits = embed(x, Modality.RGB, params)
        self.assertEqual(features.shape, (2, 64))
        self.assertEqual(logits.shape, (2, 5))
        self.assertEqual(params.num_classes, 5)
        self.assertEqual(params.embed_dim, 64)

    def test_eval_mode_is_deterministic(self):
        store = ParamStore()
        params = backbone_init(3, np.random.default_rng(2), store, widths=[4, 8], strides=[2, 2], embed_dim=6)
        store.set_mode("eval")
        x = np.random.default_rng(3).uniform(size=(1, 3, 16, 8)).astype(np.float32)
        first, _ = embed(x, Modality.RGB, params)
        second, _ = embed(x.copy(), Modality.RGB, params)
        np.testing.assert_array_equal(first.data, second.data)
        pair, _ = embed(np.concatenate([x, x]), Modality.RGB, params)
        np.testing.assert_allclose(pair.data[0], pair.data[1], rtol=1e-6)

    def test_copied_shallow_block_routes_identically(self):
        store = ParamStore()
        params = backbone_init(3, np.random.default_rng(4), store, widths=[4, 8], strides=[2, 2], embed_dim=6)
        self.assertEqual(params.shallow_rgb.conv.weight.shape, params.shallow_ir.conv.weight.shape)
        self.assertFalse(np.array_equal(params.shallow_rgb.conv.weight.data, params.shallow_ir.conv.weight.data))
        params.shallow_ir.conv.weight.data[...] = params.shallow_rgb.conv.weight.data
        store.set_mode("eval")
        x = np.random.default_rng(5).uniform(size=(2, 3, 16, 8)).astype(np.float32)
        rgb_features, rgb_logits = embed(x, Modality.RGB, params)
        ir_features, ir_logits = embed(x, Modality.IR, params)
        np.testing.assert_array_equal(rgb_features.data, ir_features.data)
        np.testing.assert_array_equal(rgb_logits.data, ir_logits.data)

    def test_empty_batch_rejected(self):
        params = backbone_init(3, np.random.default_rng(6), ParamStore(), widths=[4, 8], strides=[2, 2])
        with self.assertRaises(ValueError):
            embed(np.zeros((0, 3, 16, 8), dtype=np.float32), Modality.RGB, params)

    def test_bad_configuration_rejected(self):
        rng = np.random.default_rng(7)
        with self.assertRaises(ValueError):
            backbone_init(3, rng, ParamStore(), widths=[4], strides=[2])
        with self.assertRaises(ValueError):
            backbone_init(1, rng, ParamStore(), widths=[4, 8], strides=[2, 2])
        with self.assertRaises(ValueError):
            nonlocal_init(ParamStore(), "nl", 5, rng)

    def test_shared_blocks_collect_both_streams(self):
        with precision(np.float64):
            store = ParamStore()
            params = backbone_init(3, np.random.default_rng(8), store, widths=[4, 8], strides=[2, 2], embed_dim=6)
        rng = np.random.default_rng(9)
        ir = np.repeat(rng.uniform(size=(3, 1, 8, 4)), 3, axis=1)
        _, logits = embed(ir, Modality.IR, params)
        ops.softmax_cross_entropy(logits, [0, 1, 2]).backward()
        self.assertTrue(np.any(params.shared_blocks[0].conv.weight.grad != 0.0))
        self.assertTrue(np.all(params.shallow_rgb.conv.weight.grad == 0.0))
        self.assertTrue(np.any(params.shallow_ir.conv.weight.grad != 0.0))

    def test_streams_normalize_separately_and_share_running_statistics(self):
        def build():
            return backbone_init(
                3, np.random.default_rng(12), ParamStore(), widths=[4, 8], strides=[2, 2], embed_dim=6
            )

        rng = np.random.default_rng(13)
        rgb = rng.uniform(size=(2, 3, 16, 8)).astype(np.float32)
        ir = np.repeat(rng.uniform(size=(2, 1, 16, 8)), 3, axis=1).astype(np.float32)
        alone, mixed = build(), build()
        solo, _ = embed(rgb, Modality.RGB, alone)
        first, _ = embed(rgb, Modality.RGB, mixed)
        embed(ir, Modality.IR, mixed)

        np.testing.assert_array_equal(solo.data, first.data)
        np.testing.assert_array_equal(alone.shallow_rgb.bn.running_mean, mixed.shallow_rgb.bn.running_mean)
        pairs = [(alone.shared_blocks[0].bn, mixed.shared_blocks[0].bn), (alone.bnneck, mixed.bnneck)]
        for bn_alone, bn_mixed in pairs:
            self.assertFalse(np.allclose(bn_alone.running_mean, bn_mixed.running_mean))

    def test_translation_moves_feature_maps(self):
        with precision(np.float64):
            store = ParamStore()
            params = backbone_init(3, np.random.default_rng(10), store, widths=[4, 8], strides=[2, 2], embed_dim=6)
        store.set_mode("eval")
        x = np.zeros((1, 3, 32, 16))
        x[:, :, 8:20, 4:12] = np.random.default_rng(11).uniform(size=(1, 3, 12, 8))
        shifted = np.zeros_like(x)
        shifted[:, :, 4:, :] = x[:, :, :-4, :]
        base = feature_maps(x, Modality.RGB, params).data
        moved = feature_maps(shifted, Modality.RGB, params).data
        np.testing.assert_allclose(moved[:, :, 1:, :], base[:, :, :-1, :], atol=1e-5)
        self.assertFalse(np.allclose(moved, base))


class NonLocalTest(unittest.TestCase):
    def setUp(self):
        with precision(np.float64):
            self.params = nonlocal_init(ParamStore(), "nl", 4, np.random.default_rng(12))

    def test_zero_output_projection_is_identity(self):
        x = np.random.default_rng(13).normal(size=(2, 4, 3, 2))
        np.testing.assert_array_equal(nonlocal_block(x, self.params).data, x)

    def test_single_position(self):
        self.params.w_z.weight.data[...] = np.random.default_rng(14).normal(size=(4, 2, 1, 1))
        x = np.random.default_rng(15).normal(size=(1, 4, 1, 1))
        expected = x + self.params.w_z(self.params.g(x)).data
        np.testing.assert_allclose(nonlocal_block(x, self.params).data, expected, rtol=1e-12)

    def test_matches_direct_formula_and_permutes_with_positions(self):
        self.params.w_z.weight.data[...] = np.random.default_rng(16).normal(size=(4, 2, 1, 1))
        x = np.random.default_rng(17).normal(size=(1, 4, 2, 2))
        out = nonlocal_block(x, self.params).data
        np.testing.assert_allclose(out[0], direct_nonlocal(x[0], self.params), rtol=1e-10, atol=1e-12)

        order = [3, 0, 2, 1]
        permuted = x.reshape(1, 4, 4)[:, :, order].reshape(1, 4, 2, 2)
        permuted_out = nonlocal_block(permuted, self.params).data
        np.testing.assert_allclose(permuted_out, out.reshape(1, 4, 4)[:, :, order].reshape(1, 4, 2, 2), atol=1e-12)

    def test_backbone_places_block_after_second_stage(self):
        store = ParamStore()
        params = backbone_init(
            3, np.random.default_rng(18), store, widths=[4, 8], strides=[2, 2], embed_dim=6, use_nonlocal=True
        )
        self.assertEqual(params.nonlocal_params.theta.weight.shape, (4, 8, 1, 1))
        self.assertIn("backbone.nonlocal.w_z.weight", store.params)
        features, _ = embed(np.zeros((2, 3, 16, 8), dtype=np.float32), Modality.RGB, params)
        self.assertEqual(features.shape, (2, 6))
