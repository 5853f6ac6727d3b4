import itertools
import unittest

import numpy as np

from csl_reid.color_aug import (
    NON_IDENTITY_PERMS,
    AugPolicy,
    AugVariant,
    Image,
    apply_policy,
    channel_replace,
    channel_swap,
    compose_permutations,
    crop_at,
    grayscale,
    ica_mix,
    random_crop,
)
from csl_reid.config import Modality
from fixtures import pixel_image, random_image


def _pixel(img):
    return img.pixels.reshape(3).tolist()


class ChannelReplaceTest(unittest.TestCase):
    def test_copies_selected_channel(self):
        np.testing.assert_array_equal(_pixel(channel_replace(pixel_image([0.2, 0.5, 0.8]), "G")), [0.5, 0.5, 0.5])
        np.testing.assert_array_equal(_pixel(channel_replace(pixel_image([1.0, 0.0, 0.0]), 0)), [1.0, 1.0, 1.0])

    def test_gray_pixel_is_fixed_point(self):
        for channel in "RGB":
            np.testing.assert_array_equal(_pixel(channel_replace(pixel_image([0.4] * 3), channel)), [0.4] * 3)

    def test_second_replace_changes_nothing(self):
        img = random_image(np.random.default_rng(0))
        once = channel_replace(img, "B")
        for channel in range(3):
            np.testing.assert_array_equal(channel_replace(once, channel).pixels, once.pixels)

    def test_rejects_ir_and_unknown_channels(self):
        ir = random_image(np.random.default_rng(1), Modality.IR)
        with self.assertRaises(ValueError):
            channel_replace(ir, 0)
        with self.assertRaises(ValueError):
            channel_replace(pixel_image([0.1, 0.2, 0.3]), "X")
        with self.assertRaises(ValueError):
            channel_replace(pixel_image([0.1, 0.2, 0.3]), 3)


class ChannelSwapTest(unittest.TestCase):
    def setUp(self):
        self.img = random_image(np.random.default_rng(2), identity=7, view=1, clothing=2)

    def test_example_order(self):
        np.testing.assert_array_equal(_pixel(channel_swap(pixel_image([0.2, 0.5, 0.8]), "GBR")), [0.5, 0.8, 0.2])

    def test_identity_order(self):
        out = channel_swap(self.img, (0, 1, 2))
        np.testing.assert_array_equal(out.pixels, self.img.pixels)
        self.assertIsNot(out.pixels, self.img.pixels)

    def test_preserves_channel_multiset_and_metadata(self):
        for perm in NON_IDENTITY_PERMS:
            out = channel_swap(self.img, perm)
            np.testing.assert_array_equal(np.sort(out.pixels, axis=0), np.sort(self.img.pixels, axis=0))
            self.assertTrue(out.same_metadata(self.img))
            self.assertEqual((out.height, out.width), (self.img.height, self.img.width))

    def test_composition_over_all_pairs(self):
        perms = list(itertools.permutations(range(3)))
        pairs = 0
        for first, second in itertools.product(perms, perms):
            twice = channel_swap(channel_swap(self.img, first), second)
            once = channel_swap(self.img, compose_permutations(second, first))
            np.testing.assert_array_equal(twice.pixels, once.pixels)
            pairs += 1
        self.assertEqual(pairs, 36)

    def test_rejects_non_bijection(self):
        with self.assertRaises(ValueError):
            channel_swap(self.img, (0, 0, 1))
        with self.assertRaises(ValueError):
            channel_swap(self.img, (0, 1))


class MixAndGrayTest(unittest.TestCase):
    def test_mix_example(self):
        out = ica_mix(pixel_image([0.2, 0.5, 0.8]), pixel_image([0.8, 0.2, 0.5]))
        np.testing.assert_allclose(_pixel(out), [0.5, 0.35, 0.65])

    def test_mix_with_itself_is_identity(self):
        img = random_image(np.random.default_rng(3))
        np.testing.assert_array_equal(ica_mix(img, img).pixels, img.pixels)

    def test_mix_with_replaced_channel(self):
        r, g, b, v = 0.1, 0.6, 0.9, 0.6
        out = ica_mix(pixel_image([r, g, b]), pixel_image([v, v, v]))
        np.testing.assert_allclose(_pixel(out), [(r + v) / 2, (g + v) / 2, (b + v) / 2])

    def test_mix_channel_means(self):
        rng = np.random.default_rng(4)
        img = random_image(rng)
        aug = channel_swap(img, (2, 0, 1))
        out = ica_mix(img, aug)
        np.testing.assert_allclose(
            out.pixels.mean(axis=(1, 2)), 0.5 * (img.pixels.mean(axis=(1, 2)) + aug.pixels.mean(axis=(1, 2)))
        )

    def test_mix_on_a_thousand_pixels(self):
        img = random_image(np.random.default_rng(12), height=25, width=40)
        low, high = img.pixels.min(axis=0), img.pixels.max(axis=0)
        twins = [channel_swap(img, perm) for perm in NON_IDENTITY_PERMS]
        twins += [channel_replace(img, channel) for channel in range(3)]
        for twin in twins:
            out = ica_mix(img, twin).pixels
            self.assertTrue(np.all(out >= low - 1e-12))
            self.assertTrue(np.all(out <= high + 1e-12))

        gray = grayscale(img)
        for twin in [channel_swap(gray, perm) for perm in NON_IDENTITY_PERMS] + [channel_replace(gray, 1)]:
            np.testing.assert_array_equal(ica_mix(gray, twin).pixels, gray.pixels)

    def test_mix_rejects_mismatches(self):
        with self.assertRaises(ValueError):
            ica_mix(pixel_image([0.1] * 3, identity=1), pixel_image([0.1] * 3, identity=2))
        rng = np.random.default_rng(5)
        with self.assertRaises(ValueError):
            ica_mix(random_image(rng, height=8), random_image(rng, height=6))

    def test_grayscale(self):
        np.testing.assert_allclose(_pixel(grayscale(pixel_image([1.0, 0.0, 0.0]))), [0.299] * 3)
        np.testing.assert_allclose(_pixel(grayscale(pixel_image([0.3] * 3))), [0.3] * 3)
        np.testing.assert_array_equal(_pixel(grayscale(pixel_image([0.0] * 3))), [0.0] * 3)
        np.testing.assert_allclose(_pixel(grayscale(pixel_image([1.0] * 3))), [1.0] * 3)


class PolicyTest(unittest.TestCase):
    def setUp(self):
        self.img = random_image(np.random.default_rng(6), height=6, width=5, identity=3, view=1)

    def test_probabilities_validated(self):
        with self.assertRaises(ValueError):
            AugPolicy(p_apply=1.5)
        with self.assertRaises(ValueError):
            AugPolicy(p_cr_given_apply=-0.1)

    def test_never_applied(self):
        pol = AugPolicy(p_apply=0.0)
        rng = np.random.default_rng(0)
        for _ in range(20):
            self.assertIs(apply_policy(self.img, pol, rng), self.img)

    def test_ir_passes_through(self):
        ir = random_image(np.random.default_rng(7), Modality.IR)
        self.assertIs(apply_policy(ir, AugPolicy(p_apply=1.0), np.random.default_rng(0)), ir)

    def test_same_seed_same_decisions(self):
        for variant in AugVariant:
            pol = AugPolicy(variant=variant, rng_seed=13)
            passes = []
            for _ in range(2):
                rng = pol.make_rng()
                passes.append([apply_policy(self.img, pol, rng).pixels for _ in range(10)])
            for a, b in zip(*passes):
                np.testing.assert_array_equal(a, b)

    def test_ica_stays_inside_pixel_channel_envelope(self):
        pol = AugPolicy(p_apply=1.0, variant=AugVariant.ICA)
        rng = np.random.default_rng(8)
        low = self.img.pixels.min(axis=0)
        high = self.img.pixels.max(axis=0)
        for _ in range(25):
            out = apply_policy(self.img, pol, rng)
            self.assertTrue(np.all(out.pixels >= low - 1e-12))
            self.assertTrue(np.all(out.pixels <= high + 1e-12))
            self.assertTrue(out.same_metadata(self.img))

    def test_single_transform_variants(self):
        rng = np.random.default_rng(9)
        cr = apply_policy(self.img, AugPolicy(p_apply=1.0, variant=AugVariant.CR), rng)
        self.assertTrue(np.array_equal(cr.pixels[0], cr.pixels[1]) and np.array_equal(cr.pixels[1], cr.pixels[2]))
        cs = apply_policy(self.img, AugPolicy(p_apply=1.0, variant=AugVariant.CS), rng)
        np.testing.assert_array_equal(np.sort(cs.pixels, axis=0), np.sort(self.img.pixels, axis=0))
        self.assertFalse(np.array_equal(cs.pixels, self.img.pixels))
        gray = apply_policy(self.img, AugPolicy(p_apply=1.0, variant=AugVariant.GRAY), rng)
        np.testing.assert_array_equal(gray.pixels, grayscale(self.img).pixels)


class CropTest(unittest.TestCase):
    def setUp(self):
        self.img = random_image(np.random.default_rng(10), height=12, width=10)

    def test_zero_pad_is_identity(self):
        np.testing.assert_array_equal(random_crop(self.img, 0, np.random.default_rng(0)).pixels, self.img.pixels)

    def test_top_left_offset_shifts_content(self):
        out = crop_at(self.img, 4, (0, 0)).pixels
        self.assertTrue(np.all(out[:, :4, :] == 0.0))
        self.assertTrue(np.all(out[:, :, :4] == 0.0))
        np.testing.assert_array_equal(out[:, 4:, 4:], self.img.pixels[:, :8, :6])

    def test_centered_offset_is_identity(self):
        np.testing.assert_array_equal(crop_at(self.img, 3, (3, 3)).pixels, self.img.pixels)

    def test_random_crop_values_come_from_input_or_padding(self):
        rng = np.random.default_rng(11)
        allowed = set(self.img.pixels.reshape(-1).tolist()) | {0.0}
        for pad in (1, 2, 4):
            out = random_crop(self.img, pad, rng)
            self.assertEqual(out.pixels.shape, self.img.pixels.shape)
            self.assertTrue(set(out.pixels.reshape(-1).tolist()) <= allowed)

    def test_rejects_bad_arguments(self):
        with self.assertRaises(ValueError):
            random_crop(self.img, -1)
        with self.assertRaises(ValueError):
            crop_at(self.img, 2, (5, 0))


class ImageTest(unittest.TestCase):
    def test_validation(self):
        with self.assertRaises(ValueError):
            Image(np.zeros((4, 2, 2)))
        with self.assertRaises(ValueError):
            Image(np.full((3, 2, 2), 1.5))
