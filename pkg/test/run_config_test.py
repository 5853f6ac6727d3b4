import os
import shutil
import tempfile
import unittest

from csl_reid.config import Direction, Regime
from csl_reid.run_config import (
    ConfigError,
    DataConfig,
    EvalConfig,
    RunConfig,
    TrainConfig,
    Variant,
    parse_directions,
)
from csl_reid.utils.json_utils import write_json


class VariantTest(unittest.TestCase):
    def test_parse_spellings(self):
        self.assertEqual(Variant.parse("+ICA+PCT"), Variant.ICA_PCT)
        self.assertEqual(Variant.parse("Baseline"), Variant.BASELINE)
        self.assertEqual(Variant.parse("+Gray-Scale"), Variant.GRAY)
        self.assertEqual(Variant.parse(Variant.CS), Variant.CS)
        with self.assertRaises(ConfigError):
            Variant.parse("ica+gray")

    def test_switches(self):
        self.assertTrue(Variant.PCT.uses_pct)
        self.assertFalse(Variant.ICA.uses_pct)
        self.assertIsNone(Variant.PCT.aug_variant)
        self.assertIsNone(Variant.BASELINE.aug_variant)
        self.assertEqual(Variant.ICA_PCT.label, "+ICA+PCT")


class DirectionTest(unittest.TestCase):
    def test_aliases(self):
        self.assertEqual(parse_directions("both", Regime.VI), [Direction.NIR_TO_RGB, Direction.RGB_TO_NIR])
        self.assertEqual(parse_directions("rgb2nir,NIR->RGB", Regime.VI), [Direction.RGB_TO_NIR, Direction.NIR_TO_RGB])
        self.assertEqual(parse_directions(["cc"], Regime.CC), [Direction.CC])

    def test_regime_mismatch_and_unknown(self):
        with self.assertRaises(ConfigError):
            parse_directions("cc", Regime.VI)
        with self.assertRaises(ConfigError):
            parse_directions("both", Regime.CC)
        with self.assertRaises(ConfigError):
            parse_directions("sideways", Regime.VI)

    def test_eval_default_follows_regime(self):
        self.assertEqual(EvalConfig().resolved_directions(Regime.CC), [Direction.CC])
        self.assertEqual(len(EvalConfig().resolved_directions(Regime.VI)), 2)


class SectionValidationTest(unittest.TestCase):
    def test_defaults_are_valid(self):
        RunConfig().validate()
        self.assertEqual(TrainConfig().total_steps, 800)

    def test_train_ranges(self):
        bad = [
            dict(decay_epochs=[15, 10]),
            dict(decay_epochs=[20]),
            dict(wrt_neg_sign=0),
            dict(P=1),
            dict(mode=Regime.CC, K=1),
            dict(momentum=1.0),
            dict(widths=[4], strides=[2]),
            dict(use_nonlocal=True, widths=[4, 7], strides=[2, 2]),
            dict(dtype="float16"),
            dict(p_apply=2.0),
        ]
        for values in bad:
            with self.assertRaises(ConfigError, msg=str(values)):
                TrainConfig(**values).validate()

    def test_data_ranges(self):
        for values in (dict(n_train_ids=1), dict(views=1), dict(regime=Regime.CC, clothing_sets=1), dict(height=16)):
            with self.assertRaises(ConfigError, msg=str(values)):
                DataConfig(**values).validate()

    def test_aug_policy(self):
        self.assertIsNone(TrainConfig(variant=Variant.PCT).aug_policy())
        policy = TrainConfig(variant=Variant.CR, p_apply=0.25, seed=9).aug_policy()
        self.assertEqual(policy.p_apply, 0.25)
        self.assertEqual(policy.rng_seed, 9)


class RunConfigTest(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def test_round_trip_through_dict(self):
        cfg = RunConfig.load(overrides={"train.variant": "+PCT", "eval.gallery_views": "0,1"})
        again = RunConfig.from_dict(cfg.to_dict())
        self.assertEqual(again, cfg)
        self.assertEqual(again.train.variant, Variant.PCT)
        self.assertEqual(again.eval.gallery_views, [0, 1])
        self.assertEqual(cfg.to_dict()["train"]["mode"], "VI")

    def test_file_then_overrides(self):
        path = write_json(os.path.join(self.tmp, "run.json"), {"train": {"epochs": 6, "decay_epochs": [3]}})
        cfg = RunConfig.load(path, {"train.lr0": "0.05", "data.regime": "cc"})
        self.assertEqual(cfg.train.epochs, 6)
        self.assertEqual(cfg.train.decay_epochs, [3])
        self.assertEqual(cfg.train.lr0, 0.05)
        self.assertEqual(cfg.data.regime, Regime.CC)
        self.assertEqual(cfg.data.n_train_ids, DataConfig().n_train_ids)

    def test_unknown_keys_named(self):
        path = write_json(os.path.join(self.tmp, "bad.json"), {"train": {"learning_rate": 0.1}})
        with self.assertRaisesRegex(ConfigError, "train.learning_rate"):
            RunConfig.load(path)
        with self.assertRaisesRegex(ConfigError, "model"):
            RunConfig.from_dict({"model": {}})
        with self.assertRaisesRegex(ConfigError, "eval.topk"):
            RunConfig().with_overrides({"eval.topk": 5})

    def test_bad_types(self):
        with self.assertRaises(ConfigError):
            RunConfig().with_overrides({"train.epochs": "many"})
        with self.assertRaises(ConfigError):
            RunConfig().with_overrides({"train.epochs": 2.5})
        with self.assertRaises(ConfigError):
            RunConfig().with_overrides({"train.use_nonlocal": "maybe"})
        with self.assertRaises(ConfigError):
            RunConfig.load(os.path.join(self.tmp, "missing.json"))

    def test_flat_view(self):
        flat = RunConfig().flat()
        self.assertEqual(flat["train.lr0"], 0.1)
        self.assertEqual(flat["data.regime"], "VI")
